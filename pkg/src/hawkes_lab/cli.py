"""hawkes-lab command line: simulation, analytic tables, figure data, validation."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .convolve import SeriesDivergence, grid_fn_columns, series_for
from .counts import count_pmf
from .covariance import covariance_base, covariance_full, decompose
from .figures import COVARIANCE_FIGURES, MOMENT_FIGURES, FigureData
from .laplace import laplace1, laplace2
from .model import Grid, ModelError, load_model, model_to_dict, stability_margin
from .moments import moment_table
from .presets import PRESETS, REFERENCE_GRID, get_preset
from .simulate import METHODS, interaction_suite, simulate

log = logging.getLogger("hawkes_lab")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers

def _model(args):
    if args.model and args.preset:
        raise UsageError("give either --model or --preset, not both")
    if args.model:
        return load_model(args.model)
    return get_preset(args.preset or "reference")


def _grid(args) -> Grid:
    return Grid(args.T, args.M)


def _out(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _metadata(args, model, grid=None, **extra) -> dict:
    stab = stability_margin(model)
    meta = {"command": args.command, "model": model_to_dict(model),
            "seed": getattr(args, "seed", None), "stability": asdict(stab), "warnings": []}
    if grid is not None:
        meta["grid"] = {"T": grid.T, "M": grid.M, "tau": grid.tau}
    if not stab.stable:
        meta["warnings"].append(
            f"stability condition fails: d * max kernel mass = {stab.d_alpha:.6g} >= 1")
    meta.update(extra)
    return meta


def _finish(args, out, meta, files):
    meta["files"] = sorted(str(Path(f).name) for f in files)
    io.write_json(out / "metadata.json", meta)
    for w in meta["warnings"]:
        log.warning(w)
    for f in files:
        print(f)


def _vector(text: str, d: int) -> np.ndarray:
    try:
        vals = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot read vector {text!r}") from None
    if len(vals) == 1:
        vals = vals * d
    if len(vals) != d:
        raise UsageError(f"vector {text!r} needs {d} entries")
    return np.array(vals)


def _a_list(args, d: int) -> list:
    vecs = [_vector(a, d) for a in (args.a or [])]
    if args.a_file:
        for line in Path(args.a_file).read_text().splitlines():
            line = line.split("#")[0].strip()
            if line:
                vecs.append(_vector(line, d))
    if not vecs:
        raise UsageError("give at least one --a or --a-file")
    return vecs


def _stride_nodes(grid: Grid, stride: int) -> np.ndarray:
    if stride < 1:
        raise UsageError("--stride must be >= 1")
    idx = np.arange(0, grid.M + 1, stride)
    if idx[-1] != grid.M:
        idx = np.append(idx, grid.M)
    return idx


def _series(model, grid, args):
    try:
        return series_for(model, grid, K=args.K, tol=args.tol, rule=args.rule)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_figures(names, data: FigureData, out: Path) -> list:
    files = []
    for name in names:
        for fname, (header, rows) in data.table(name).items():
            files.append(io.write_table(out / fname, header, rows))
    return files


# ----------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    out = _out(args)
    if args.interaction_suite:
        files = []
        bundle = interaction_suite(T=args.T, seed=args.seed, method=args.method)
        for name, traj in bundle.items():
            files += _write_trajectory(out / name, traj, None, args)
        meta = {"command": args.command, "seed": args.seed, "T": args.T,
                "method": args.method, "patterns": list(bundle), "warnings": []}
        _finish(args, out, meta, files)
        return 0
    model = _model(args)
    traj = simulate(model, args.T, args.seed, args.method, run=args.run)
    files = _write_trajectory(out, traj, model, args)
    meta = _metadata(args, model, _grid(args), method=args.method, run=args.run,
                     events=len(traj), simulator=traj.stats)
    _finish(args, out, meta, files)
    return 0


def _write_trajectory(out: Path, traj, model, args) -> list:
    files = [io.write_table(out / "events.csv", ["time", "component", "generation"],
                            zip(traj.times.tolist(), (traj.marks + 1).tolist(),
                                traj.generations.tolist()))]
    grid = Grid(traj.T, args.M)
    t = grid.nodes
    counts = traj.counts_at(t)
    d = traj.d
    files.append(io.write_table(out / "counts.csv", ["t"] + [f"N{i + 1}" for i in range(d)],
                                ([x] + c for x, c in zip(t.tolist(), counts.tolist()))))
    if model is not None:
        lam = traj.intensity(model, t)
        files.append(io.write_table(out / "intensity.csv",
                                    ["t"] + [f"lambda{i + 1}" for i in range(d)],
                                    ([x] + v for x, v in zip(t.tolist(), lam.tolist()))))
    return files


def cmd_moments(args) -> int:
    out = _out(args)
    if args.figure:
        return _figure_command(args, out, MOMENT_FIGURES)
    model = _model(args)
    grid = _grid(args)
    series = _series(model, grid, args)
    try:
        tab = moment_table(model, series)
    except SeriesDivergence as exc:
        log.error("%s", exc)
        return 1
    parts = [grid_fn_columns(tab.M_full, "M_full"), grid_fn_columns(tab.m_full, "m_full"),
             grid_fn_columns(tab.m_base, "m_base"), grid_fn_columns(tab.M_base, "M_base")]
    header = ["t"] + [n for names, _ in parts for n in names]
    body = np.column_stack([grid.nodes] + [v for _, v in parts])
    files = [io.write_table(out / "moments.csv", header, body.tolist())]
    meta = _metadata(args, model, grid, terms=series.K,
                     last_term_norm=float(np.max(series.tail_estimate)), rule=args.rule)
    _finish(args, out, meta, files)
    return 0


def _figure_command(args, out, allowed) -> int:
    if args.figure not in allowed:
        raise UsageError(f"{args.command} emits {', '.join(allowed)}; got {args.figure}")
    if args.model and not args.preset:
        log.warning("figures use the built-in reference model; --model ignored")
    grid = Grid(args.T, args.M) if args.grid_from_flags else REFERENCE_GRID
    data = FigureData(grid=grid, K=args.K, tol=args.tol)
    files = _write_figures([args.figure], data, out)
    meta = _metadata(args, data.model, grid, figure=args.figure, terms=data.series.K)
    _finish(args, out, meta, files)
    return 0


def _surface_rows(C, nodes, t):
    header = ["t1"] + [format(x, ".17g") for x in t[nodes]]
    rows = ([t[i]] + C[i, nodes].tolist() for i in nodes)
    return header, rows


def cmd_covariance(args) -> int:
    out = _out(args)
    if args.figure:
        return _figure_command(args, out, COVARIANCE_FIGURES)
    model = _model(args)
    grid = _grid(args)
    d = model.d
    series = _series(model, grid, args)
    try:
        tab = moment_table(model, series)
    except SeriesDivergence as exc:
        log.error("%s", exc)
        return 1
    igniters = args.igniter if args.igniter else list(range(d + 1))
    if any(not 0 <= j <= d for j in igniters):
        raise UsageError(f"igniters are numbered 0..{d}")
    base = [j for j in igniters if j >= 1]
    table = covariance_base(model, series, tab.M_base, igniters=base) if base else None
    if 0 in igniters:
        full = covariance_full(model, series, tab.M_base, tab.m_full)
        table = full if table is None else table.merge(full)
    nodes = _stride_nodes(grid, args.stride)
    t = grid.nodes
    files = []
    for jp in igniters:
        for k in range(d):
            for l in range(d):
                header, rows = _surface_rows(table.block(jp, k, l), nodes, t)
                files.append(io.write_table(out / f"cov_{jp}_{k + 1}_{l + 1}.csv", header, rows))
    if args.decompose is not None:
        jp = args.decompose
        if not 0 <= jp <= d:
            raise UsageError(f"--decompose takes an igniter in 0..{d}")
        sing = {}
        for k in range(d):
            for l in range(d):
                dec = decompose(tab.m_base, tab.m_full, jp, k, l)
                sing[f"singular_{jp}_{k + 1}_{l + 1}"] = dec.singular[nodes]
                header, rows = _surface_rows(dec.ac, nodes, t)
                files.append(io.write_table(out / f"decomp_ac_{k + 1}_{l + 1}.csv", header, rows))
        files.append(io.write_columns(out / "decomp_singular.csv", {"t": t[nodes], **sing}))
    meta = _metadata(args, model, grid, igniters=igniters, stride=args.stride,
                     layout="rows t1, columns t2; full square, lower part by transposition")
    _finish(args, out, meta, files)
    return 0


def cmd_laplace1(args) -> int:
    out = _out(args)
    model = _model(args)
    grid = _grid(args)
    avecs = _a_list(args, model.d)
    cols = {"t": grid.nodes}
    for n, a in enumerate(avecs):
        L = laplace1(model, a, grid)
        for jp in range(model.d + 1):
            cols[f"a{n}_jp{jp}"] = L[jp]
    files = [io.write_columns(out / "laplace1.csv", cols)]
    meta = _metadata(args, model, grid, a=[a.tolist() for a in avecs],
                     columns="a<n>_jp<j'>: query n, igniter j' (0 = full process)")
    _finish(args, out, meta, files)
    return 0


def cmd_laplace2(args) -> int:
    out = _out(args)
    model = _model(args)
    grid = _grid(args)
    d = model.d
    if args.a1 is None or args.a2 is None:
        raise UsageError("laplace2 needs --a1 and --a2")
    a = np.column_stack([_vector(args.a1, d), _vector(args.a2, d)])
    nodes = _stride_nodes(grid, args.stride)
    offsets = args.offset if args.offset else sorted({int(o) for o in nodes})
    bands = laplace2(model, a, grid, offsets=offsets)
    t = grid.nodes
    header = ["t1", "t2"] + [f"jp{j}" for j in range(d + 1)]
    rows = []
    for b, off in enumerate(bands.offsets):
        for r in nodes:
            if r + off <= grid.M:
                rows.append([t[r], t[r + off]] + bands.values[:, b, r].tolist())
    files = [io.write_table(out / "laplace2.csv", header, rows)]
    meta = _metadata(args, model, grid, a1=a[:, 0].tolist(), a2=a[:, 1].tolist(),
                     offsets=[int(o) for o in bands.offsets], stride=args.stride)
    _finish(args, out, meta, files)
    return 0


def cmd_counts(args) -> int:
    out = _out(args)
    model = _model(args)
    grid = _grid(args)
    d = model.d
    try:
        pmf = count_pmf(model, grid, args.L_max)
    except FloatingPointError as exc:
        log.error("%s", exc)
        return 1
    nodes = _stride_nodes(grid, args.stride)
    t = grid.nodes
    header = ["t"] + [f"l{i + 1}" for i in range(d)] + ["probability"]
    files = []
    for jp in range(d + 1):
        rows = ([t[m]] + list(pt) + [pmf.values[b, jp, m]]
                for m in nodes for b, pt in enumerate(pmf.points))
        files.append(io.write_table(out / f"pmf_{jp}.csv", header, rows))
    files.append(io.write_columns(out / "pmf_residual.csv",
                                  {"t": t[nodes], **{f"jp{j}": pmf.residual[j, nodes]
                                                     for j in range(d + 1)}}))
    meta = _metadata(args, model, grid, L_max=pmf.L_max, stride=args.stride)
    _finish(args, out, meta, files)
    return 0


def cmd_validate(args) -> int:
    from .validation import run_suite
    criteria = None
    if args.criteria:
        try:
            criteria = sorted({int(c) for c in args.criteria.split(",")})
        except ValueError:
            raise UsageError("--criteria takes a comma-separated list of 1..9") from None
        if any(not 1 <= c <= 9 for c in criteria):
            raise UsageError("--criteria takes a comma-separated list of 1..9")
    scale = args.scale
    t0 = time.perf_counter()
    reports = run_suite(scale, criteria, negative_control=args.negative_control, echo=print)
    ok = all(r.passed for r in reports)
    summary = {"scale": scale, "negative_control": args.negative_control,
               "seconds": round(time.perf_counter() - t0, 3),
               "verdict": "pass" if ok else "fail", "criteria": [r.as_dict() for r in reports]}
    out = _out(args)
    io.write_json(out / "validation.json", summary)
    print(f"{'ALL PASS' if ok else 'FAILURES'}: {sum(r.passed for r in reports)}/{len(reports)}"
          f" criteria passed; report in {out / 'validation.json'}")
    return 0 if ok else 1


# ------------------------------------------------------------------- parser

def _common(p, sim=False):
    p.add_argument("--model", help="model JSON file")
    p.add_argument("--preset", help=f"built-in model: {', '.join(PRESETS)}")
    p.add_argument("--T", type=float, default=10.0, help="horizon (default 10)")
    p.add_argument("--M", type=int, default=2000, help="grid intervals (default 2000)")
    p.add_argument("--seed", type=int, default=0, help="master seed (u64)")
    p.add_argument("--out", default=".", help="output directory (default .)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (default HAWKES_LAB_THREADS or CPU count)")


def _series_flags(p):
    p.add_argument("--K", type=int, default=None, help="fixed number of series terms")
    p.add_argument("--tol", type=float, default=1e-10, help="series last-term tolerance")
    p.add_argument("--rule", choices=("rectangle", "trapezoid"), default="rectangle")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hawkes-lab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one trajectory")
    _common(p)
    p.add_argument("--method", choices=METHODS, default="thinning")
    p.add_argument("--run", type=int, default=0, help="run index within the seed schedule")
    p.add_argument("--interaction-suite", action="store_true",
                   help="one trajectory per d=4 interaction pattern, shared seed")
    p.set_defaults(func=cmd_simulate)

    for name, func, figs in (("moments", cmd_moments, MOMENT_FIGURES),
                             ("covariance", cmd_covariance, COVARIANCE_FIGURES)):
        p = sub.add_parser(name, help=f"{name} tables")
        _common(p)
        _series_flags(p)
        p.add_argument("--figure", choices=figs, help="emit the data behind one figure")
        p.add_argument("--grid-from-flags", action="store_true",
                       help="use --T/--M for figures instead of T=10, M=2000")
        if name == "covariance":
            p.add_argument("--igniter", type=int, action="append",
                           help="igniter to emit (0 = full process); repeatable")
            p.add_argument("--decompose", type=int, default=None, metavar="JP",
                           help="also emit the singular / absolutely continuous split")
            p.add_argument("--stride", type=int, default=1, help="output every n-th node")
        p.set_defaults(func=func)

    p = sub.add_parser("laplace1", help="single-time Laplace transforms")
    _common(p)
    p.add_argument("--a", action="append", help="transform vector, comma separated; repeatable")
    p.add_argument("--a-file", help="file with one transform vector per line")
    p.set_defaults(func=cmd_laplace1)

    p = sub.add_parser("laplace2", help="two-time Laplace transforms")
    _common(p)
    p.add_argument("--a1", help="transform vector acting at t1")
    p.add_argument("--a2", help="transform vector acting at t2")
    p.add_argument("--offset", type=int, action="append",
                   help="band m2 - m1 to compute; repeatable (default: strided bands)")
    p.add_argument("--stride", type=int, default=20, help="output every n-th node (default 20)")
    p.set_defaults(func=cmd_laplace2)

    p = sub.add_parser("counts", help="count probabilities on the lattice")
    _common(p)
    p.add_argument("--L-max", type=int, default=None, dest="L_max",
                   help="largest total count (default 8 for d=1, 5 otherwise)")
    p.add_argument("--stride", type=int, default=1, help="output every n-th node")
    p.set_defaults(func=cmd_counts)

    p = sub.add_parser("validate", help="run the acceptance suite")
    p.add_argument("--scale", choices=("quick", "full"), default="full")
    p.add_argument("--criteria", help="subset, e.g. 1,3,9")
    p.add_argument("--out", default=".", help="directory for validation.json")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--negative-control", action="store_true",
                   help="flip the Laplace sign; the Laplace checks must then fail")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "threads", None):
        import os
        os.environ["HAWKES_LAB_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except (UsageError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
