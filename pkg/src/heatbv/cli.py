"""Command-line driver: ``heatbv {converge,kernel-diag,mc,constants,plot}``.

Exit codes: 0 on success (numerical disagreement with a reference is
reported, not an error), 2 for configuration errors, 3 when a computation
exceeds its numerical budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HeatBVError, NumericalCapacityError
from .fields import parse_field, registry_ids
from .functionals import (
    PIPELINES,
    FunctionalConfig,
    default_t_grid,
    gaussian_polar_moment,
    run_convergence,
    sobolev_constant,
    sphere_average_abs_moment,
)
from .kernels import SpectralKernel, compare_kernels, gaussian_radial
from .manifolds import build_quadrature, distance, manifold_from_id
from .stochastic import (
    RandomWalkConfig,
    feynman_kac_oneform,
    gaussian_absmoment_check,
    mc_bv_estimate,
)

THREADS_ENV = "HEATBV_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY = 0, 2, 3


# -- serialization ------------------------------------------------------------

def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with 17-digit floats and non-finite values as null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def versions() -> dict:
    import numba
    import scipy
    return {"heatbv": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# -- argument helpers ---------------------------------------------------------

def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}") from None


def parse_t_grid(text: str | None, m) -> tuple[float, ...]:
    """``None`` (default grid), ``a,b,c`` or ``geom:start:stop:count``."""
    if text is None or text == "default":
        return default_t_grid(m)
    if text.startswith("geom:"):
        parts = text.split(":")[1:]
        if len(parts) != 3:
            raise ConfigError("t_grid: geom needs start:stop:count")
        a, b = _floats(parts[0], "t_grid")[0], _floats(parts[1], "t_grid")[0]
        try:
            n = int(parts[2])
        except ValueError:
            raise ConfigError("t_grid: count must be an integer") from None
        return tuple(float(v) for v in np.geomspace(a, b, n))
    return tuple(_floats(text, "t_grid"))


def _manifold(text):
    try:
        return manifold_from_id(text)
    except ValueError as exc:
        raise ConfigError(f"manifold: {exc}") from None


def _field(m, text):
    # bare ids such as "cos" are resolved against the manifold
    return parse_field(m, text)


def _threads(value):
    if value is not None:
        n = value
    else:
        try:
            n = int(os.environ.get(THREADS_ENV, "1"))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}: must be an integer") from None
    if n < 1:
        raise ConfigError("threads: must be at least 1")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


def _eps_values(text, m) -> list[float] | None:
    if text is None:
        return None
    out = []
    for v in text.split(","):
        v = v.strip()
        out.append(0.9 * m.injectivity_radius if v == "default" else _floats(v, "eps")[0])
    for e in out:
        if not 0 < e < m.injectivity_radius:
            raise ConfigError(f"eps: {e:g} outside (0, injectivity radius {m.injectivity_radius:g})")
    return out


# -- subcommands --------------------------------------------------------------

def _rows_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "F_t", "resolution", "diag"])
    for r in report.rows:
        # repr of a float is the shortest string that round-trips
        diag = json.dumps(dict(sorted(r.diag.items())), separators=(",", ":"))
        w.writerow([fmt(r.t), fmt(r.value), r.resolution, diag])
    return buf.getvalue()


def cmd_converge(args) -> int:
    m = _manifold(args.manifold)
    f = _field(m, args.field)
    threads = _threads(args.threads)
    pipeline = args.pipeline
    eps_list = _eps_values(args.eps, m)
    if pipeline == "gaussian-ball" and not eps_list:
        raise ConfigError("eps: required by the gaussian-ball pipeline (use a number or 'default')")
    p = args.p
    mc = None
    if pipeline == "monte-carlo":
        if args.n_paths is None:
            raise ConfigError("n_paths: required by the monte-carlo pipeline")
        mc = RandomWalkConfig(step_size=args.step_size, n_paths=args.n_paths, seed=args.seed,
                              threads=threads)
    t_grid = parse_t_grid(args.t_grid, m)
    eps_runs = eps_list if pipeline == "gaussian-ball" else [None]
    k = SpectralKernel(m)
    started = time.time()
    reports = []
    for eps in eps_runs:
        cfg = FunctionalConfig(t_grid, p=p, ball_radius=eps, spacing_factor=args.spacing_factor,
                               n_fit=args.n_fit, mc=mc, seed=args.seed)
        log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
        reports.append(run_convergence(m, f, pipeline, cfg, k, log))
    elapsed = time.time() - started
    rep = reports[0]
    config = {
        "manifold": m.id, "field": f.id, "pipeline": pipeline, "p": p,
        "t_grid": list(t_grid), "spacing_factor": args.spacing_factor, "n_fit": args.n_fit,
        "eps": eps_runs[0], "n_paths": args.n_paths, "step_size": args.step_size,
    }
    summary = {
        "limit": rep.extrapolated_limit,
        "fit": {"a": rep.fit_coefficients[0], "b": rep.fit_coefficients[1],
                "condition": rep.fit_condition},
        "reference": {"value": rep.reference.value, "provenance": rep.reference.provenance.value,
                      "scaled": rep.reference_scaled},
        "rel_error": rep.relative_error,
        "F_t_min": rep.f_tmin,
        "rel_error_t_min": rep.relative_error_tmin,
        "config": config,
        "versions": versions(),
        "seed": args.seed,
    }
    if len(reports) > 1:
        summary["eps_sweep"] = [{"eps": e, "limit": r.extrapolated_limit, "rel_error": r.relative_error}
                                for e, r in zip(eps_runs, reports)]
    text = to_json(summary) + "\n"
    if args.out:
        out = Path(args.out)
        _write(out / "rows.csv", _rows_csv(rep))
        _write(out / "summary.json", text)
        _write(out / "timing.json", to_json({"elapsed_seconds": elapsed,
                                             "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z")}) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_kernel_diag(args) -> int:
    m = _manifold(args.manifold)
    _threads(args.threads)
    ts = _floats(args.t, "t")
    eps = (_eps_values(args.eps, m) or [0.9 * m.injectivity_radius])[0]
    k = SpectralKernel(m)
    f = _field(m, args.field) if args.field else None
    rows = []
    for t in ts:
        if t <= 0:
            raise ConfigError("t: must be positive")
        from .functionals import required_resolution
        n = args.resolution or required_resolution(m, t)
        grid = build_quadrature(m, n)
        rep = compare_kernels(k, t, eps, grid, f)
        # Gaussian comparability: max of p_t / p~_t over sampled pairs, scaled by
        # t^((n-1)/2); pairs where p_t is below the series noise floor are skipped
        idx = np.linspace(0, grid.size - 1, min(8, grid.size)).astype(int)
        floor = 1e-12 * k.diagonal(t)
        ratio = 0.0
        for i in idx:
            x = grid.nodes[i]
            d = distance(m, x[None], grid.nodes)
            ex = k(t, x[None], grid.nodes)
            ok = ex > floor
            ratio = max(ratio, float(np.max(ex[ok] / gaussian_radial(t, d[ok], m.dim))))
        row = rep.as_dict()
        row["resolution"] = n
        row["gaussian_ratio_scaled"] = ratio * t ** ((m.dim - 1) / 2)
        rows.append(row)
    text = to_json({"manifold": m.id, "rows": rows, "versions": versions()}) + "\n"
    if args.out:
        _write(Path(args.out) / "kernel_diag.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_mc(args) -> int:
    threads = _threads(args.threads)
    if args.check == "absmoment":
        est = gaussian_absmoment_check(args.seed, args.n_paths, antithetic=False)
        out = {"check": "absmoment", "mean": est.mean, "stderr": est.stderr, "n": est.n,
               "target": math.sqrt(2 / math.pi)}
    else:
        # the 1-form check is about curvature, so it defaults to the sphere
        mid = args.manifold or ("sphere" if args.check == "feynman-kac" else "circle")
        m = _manifold(mid)
        cfg = RandomWalkConfig(step_size=args.step_size, n_paths=args.n_paths, seed=args.seed,
                               antithetic=not args.no_antithetic, threads=threads)
        fid = args.field or registry_ids(m)[0]
        if args.check == "bv":
            f = _field(m, fid)
            est = mc_bv_estimate(m, f, args.t, cfg)
            out = {"check": "bv", "manifold": m.id, "field": f.id, "t": args.t,
                   "mean": est.mean, "stderr": est.stderr, "n": est.n}
        else:
            f = _field(m, fid)
            x = _floats(args.x, "x") if args.x else ([1.0, 0.0, 0.0] if not m.is_flat else [1.0] * m.dim)
            r = feynman_kac_oneform(x, args.t, cfg, m=m, field=f, ricci_factor=not args.no_ricci)
            out = {"check": "feynman-kac", "manifold": m.id, "field": f.id, "t": args.t,
                   "mean": list(r.mean), "stderr": list(r.stderr), "target": list(r.target),
                   "relative_gap": r.relative_gap, "n": r.n, "ricci_factor": not args.no_ricci}
    out["seed"] = args.seed
    text = to_json(out) + "\n"
    if args.out:
        _write(Path(args.out) / "mc.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_constants(args) -> int:
    ps = _floats(args.p, "p")
    if any(p < 1 for p in ps):
        raise ConfigError("p: must be at least 1")
    if len(ps) == 1 and not args.verbose:
        print(fmt(sobolev_constant(ps[0])))
        return EXIT_OK
    rows = []
    for p in ps:
        avg = sphere_average_abs_moment(p, args.n)
        rows.append({"p": p, "c_p": sobolev_constant(p), "sphere_average": avg,
                     "sphere_average_times_radial": avg * gaussian_polar_moment(p, args.n)})
    sys.stdout.write(to_json({"n": args.n, "rows": rows}) + "\n")
    return EXIT_OK


def render_svg(ts, values, limit=None, reference=None, width=640, height=400) -> str:
    """Line plot of ``F(t)`` against ``log10 t`` as a standalone SVG document."""
    x = np.log10(np.asarray(ts, dtype=float))
    y = np.asarray(values, dtype=float)
    extra = [v for v in (limit, reference) if v is not None]
    ylo, yhi = min(y.min(), *extra) if extra else y.min(), max(y.max(), *extra) if extra else y.max()
    if yhi == ylo:
        yhi, ylo = yhi + 1, ylo - 1
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = x.min(), x.max()
    if xhi == xlo:
        xhi, xlo = xhi + 1, xlo - 1
    L, R, T, B = 70, 20, 20, 50
    sx = lambda v: L + (v - xlo) / (xhi - xlo) * (width - L - R)
    sy = lambda v: T + (yhi - v) / (yhi - ylo) * (height - T - B)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{L}" y1="{height - B}" x2="{width - R}" y2="{height - B}" stroke="black"/>',
             f'<line x1="{L}" y1="{T}" x2="{L}" y2="{height - B}" stroke="black"/>']
    for e in range(math.floor(xlo), math.ceil(xhi) + 1):
        if xlo <= e <= xhi:
            parts.append(f'<text x="{sx(e):.1f}" y="{height - B + 18}" font-size="12" '
                         f'text-anchor="middle">1e{e}</text>')
    for v in np.linspace(ylo, yhi, 5):
        parts.append(f'<text x="{L - 6}" y="{sy(v) + 4:.1f}" font-size="11" text-anchor="end">{v:.4g}</text>')
    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>')
    for a, b in zip(x, y):
        parts.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="#1f5fa8"/>')
    for v, colour, label in ((limit, "#c0392b", "limit"), (reference, "#27ae60", "reference")):
        if v is not None:
            parts.append(f'<line x1="{L}" y1="{sy(v):.2f}" x2="{width - R}" y2="{sy(v):.2f}" '
                         f'stroke="{colour}" stroke-dasharray="5,4"/>')
            parts.append(f'<text x="{width - R - 4}" y="{sy(v) - 4:.2f}" font-size="11" '
                         f'text-anchor="end" fill="{colour}">{label}</text>')
    parts.append(f'<text x="{(L + width - R) / 2}" y="{height - 10}" font-size="12" '
                 f'text-anchor="middle">t</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plot(args) -> int:
    path = Path(args.csv)
    if not path.exists():
        raise ConfigError(f"csv: {path} does not exist")
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "t" not in rows[0] or "F_t" not in rows[0]:
        raise ConfigError("csv: expected columns t and F_t")
    ts = [float(r["t"]) for r in rows]
    vals = [float(r["F_t"]) for r in rows]
    limit = reference = None
    summ = Path(args.summary) if args.summary else path.with_name("summary.json")
    if summ.exists():
        s = json.loads(summ.read_text())
        limit, reference = s.get("limit"), (s.get("reference") or {}).get("scaled")
    out = Path(args.out) if args.out else path.with_suffix(".svg")
    _write(out, render_svg(ts, vals, limit, reference))
    print(str(out))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatbv", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"heatbv {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default: ${THREADS_ENV} or 1)")
        p.add_argument("--out", default=None, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("converge", help="run a functional along a t grid and extrapolate")
    c.add_argument("--manifold", default="circle")
    c.add_argument("--field", default="cos", help="registry id, e.g. cos, arc:0:pi, sphere:cap:pi/2")
    c.add_argument("--pipeline", default="exact-kernel", choices=PIPELINES)
    c.add_argument("--p", type=float, default=1.0)
    c.add_argument("--t-grid", default=None, help="a,b,c or geom:start:stop:count")
    c.add_argument("--eps", default=None, help="ball radius(es) for gaussian-ball; 'default' = 0.9 inj")
    c.add_argument("--spacing-factor", type=float, default=4.0,
                   help="grid spacing is sqrt(t)/factor (at least 4)")
    c.add_argument("--n-fit", type=int, default=6)
    c.add_argument("--n-paths", type=int, default=None)
    c.add_argument("--step-size", type=float, default=None)
    c.add_argument("-v", "--verbose", action="store_true")
    common(c)
    c.set_defaults(func=cmd_converge)

    k = sub.add_parser("kernel-diag", help="exact kernel versus Gaussian surrogate")
    k.add_argument("--manifold", default="sphere")
    k.add_argument("--t", default="0.05,0.02,0.01")
    k.add_argument("--eps", default=None)
    k.add_argument("--field", default=None)
    k.add_argument("--resolution", type=int, default=None)
    common(k, seed=False)
    k.set_defaults(func=cmd_kernel_diag)

    mc = sub.add_parser("mc", help="Monte Carlo checks")
    mc.add_argument("--check", choices=("bv", "absmoment", "feynman-kac"), default="bv")
    mc.add_argument("--manifold", default=None, help="default: sphere for feynman-kac, else circle")
    mc.add_argument("--field", default=None, help="default: the manifold's first registry field")
    mc.add_argument("--t", type=float, default=0.01)
    mc.add_argument("--x", default=None, help="start point for feynman-kac")
    mc.add_argument("--n-paths", type=int, default=100_000)
    mc.add_argument("--step-size", type=float, default=None)
    mc.add_argument("--no-antithetic", action="store_true")
    mc.add_argument("--no-ricci", action="store_true", help="drop the Ricci factor (negative control)")
    common(mc)
    mc.set_defaults(func=cmd_mc)

    k2 = sub.add_parser("constants", help="c_p and its sphere-average cross-checks")
    k2.add_argument("--p", default="1")
    k2.add_argument("--n", type=int, default=2, help="dimension for the sphere averages")
    k2.add_argument("-v", "--verbose", action="store_true")
    k2.set_defaults(func=cmd_constants)

    pl = sub.add_parser("plot", help="SVG plot of a rows.csv")
    pl.add_argument("csv")
    pl.add_argument("--summary", default=None)
    pl.add_argument("--out", default=None)
    pl.set_defaults(func=cmd_plot)

    ap.epilog = "registry fields: " + "; ".join(
        ", ".join(registry_ids(manifold_from_id(mid))) for mid in ("circle", "torus", "sphere"))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except NumericalCapacityError as exc:
        print(f"numerical capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (HeatBVError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
