"""Scenario runner and figure-data emitter.

Every subcommand reads a JSON config, writes CSV/JSON outputs under
--out, and drops a run manifest (command, config echo, library
versions, seed) next to them.  CSV files carry the schema header
`# roughmanifold-csv v1`.

Exit codes: 0 success, 2 config error, 3 admissibility failure,
4 numerical non-convergence / explosion.
"""

from __future__ import annotations

import json
import platform
import sys
from pathlib import Path

import click
import numpy as np

from .controlled import (ControlledPath, one_form, pushforward_rough,
                         rough_integral)
from .manifold_rough import (ControlledIntegrand, ManifoldRoughPath, Segment,
                             exact_one_form, rough_integral_nabla)
from .manifolds import Manifold, connection_from_table, get_manifold
from .extrinsic import constrained_integral
from .rde import solve_linear
from .rough_core import RoughPath, smooth_lift
from .stochastic import DEFAULT_RATIO, lift as stochastic_lift, sample_bm
from .transport import (AdmissibilityError, antidevelop, develop,
                        einstein_decay_scenario, hormander_cloud_scenario,
                        lift_connection, parallel_transport,
                        _orthonormal_frame)

SCHEMA = "# roughmanifold-csv v1"

EXIT_CONFIG = 2
EXIT_ADMISSIBILITY = 3
EXIT_NONCONVERGENCE = 4


class ConfigError(Exception):
    pass


class NonConvergence(Exception):
    pass


def _fmt(v) -> str:
    return "%.17g" % float(v)


def _write_csv(path: Path, cols, rows, comments=()) -> None:
    with open(path, "w") as fh:
        fh.write(SCHEMA + "\n")
        for c in comments:
            fh.write("# " + c + "\n")
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v
                              for v in row) + "\n")


def _versions() -> dict:
    import numpy
    import scipy
    from importlib.metadata import version
    return {"python": platform.python_version(),
            "numpy": numpy.__version__, "scipy": scipy.__version__,
            "artifact": version("artifact")}


def _write_manifest(outdir: Path, command: str, config: dict,
                    outputs, extra=None) -> None:
    manifest = {"command": command, "config": config,
                "versions": _versions(),
                "seed": (config.get("driver") or {}).get("seed"),
                "tolerances": config.get("tolerances", {}),
                "outputs": sorted(str(p) for p in outputs)}
    if extra:
        manifest.update(extra)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}")


def _require(cfg: dict, key: str, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"{where} is missing required key {key!r}")
    return cfg[key]


_CURVES = {
    # rugby-ball curve used by the torsion-rolling figure
    "torsion": (3, lambda t: np.array([2 * t * np.cos(t), 10 * np.sin(t), 3 * t])),
    "circle": (2, lambda t: np.array([np.cos(t), np.sin(t)])),
}


def _driver_from_config(dcfg: dict) -> RoughPath:
    """Driver factory: {"type": "bm" | "smooth" | "json", ...}."""
    typ = _require(dcfg, "type", "driver")
    p = float(dcfg.get("p", 2.0))
    if typ == "bm":
        d = int(_require(dcfg, "d", "bm driver"))
        T = float(dcfg.get("T", 1.0))
        seed = int(dcfg.get("seed", 0))
        coarse_n = int(dcfg.get("coarse_n", 64))
        fine_n = int(dcfg.get("fine_n", coarse_n * dcfg.get("fine_ratio", DEFAULT_RATIO)))
        rule = dcfg.get("rule", "ito")
        if rule not in ("ito", "strat"):
            raise ConfigError(f"driver rule must be 'ito' or 'strat', got {rule!r}")
        ft, tr = sample_bm(d, T, fine_n, seed)
        return stochastic_lift(ft, tr, coarse_n, rule, p)
    if typ == "smooth":
        name = _require(dcfg, "curve", "smooth driver")
        if name not in _CURVES:
            raise ConfigError(f"unknown curve {name!r}; have {sorted(_CURVES)}")
        d, fn = _CURVES[name]
        T = float(dcfg.get("T", 1.0))
        n = int(dcfg.get("n", 256))
        return smooth_lift(np.linspace(0.0, T, n + 1), fn, d, p)
    if typ == "json":
        path = _require(dcfg, "path", "json driver")
        try:
            with open(path) as fh:
                return RoughPath.from_json(fh.read())
        except OSError as e:
            raise ConfigError(f"cannot read driver file {path!r}: {e}")
    raise ConfigError(f"unknown driver type {typ!r}")


def _manifold_from_config(cfg: dict) -> Manifold:
    name = _require(cfg, "manifold")
    try:
        mfd = get_manifold(name)
    except (KeyError, ValueError) as e:
        raise ConfigError(str(e))
    if "connection" in cfg:
        conn = connection_from_table(cfg["connection"])
        mfd = Manifold(mfd.charted, mfd.metric, conn, mfd.embedding)
    return mfd


def _tb_lift(cfg: dict, mfd: Manifold):
    kind = cfg.get("tb_lift", "horizontal")
    return lift_connection(mfd.connection, kind, metric=mfd.metric,
                           dim=mfd.dim)


def _one_form_from_config(fcfg: dict, rp: RoughPath) -> ControlledPath:
    """Integrand factory: constant matrix or x-linear tensor one-form."""
    kind = _require(fcfg, "kind", "integrand")
    if kind == "constant":
        M = np.asarray(_require(fcfg, "matrix", "constant integrand"), dtype=float)
        e, d = M.shape
        return one_form(lambda x: M, lambda x: np.zeros((e, d, d)), None, rp)
    if kind == "linear":
        M = np.asarray(_require(fcfg, "tensor", "linear integrand"), dtype=float)
        if M.ndim != 3:
            raise ConfigError("linear integrand tensor must have shape (e, d, c)")
        return one_form(lambda x: np.einsum("edc,c->ed", M, x),
                        lambda x: M, None, rp)
    raise ConfigError(f"unknown integrand kind {kind!r}")


def _single_chart_path(mfd: Manifold, chart_id: str, rp: RoughPath,
                       x0=None) -> ManifoldRoughPath:
    if chart_id not in mfd.charted.charts:
        raise ConfigError(f"manifold {mfd.name!r} has no chart {chart_id!r}")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        rp = RoughPath(rp.times, rp.trace - rp.trace[0] + x0, rp.level2, rp.p)
    return ManifoldRoughPath(mfd, [Segment(chart_id, rp)], rp.p)


def _walk(mrp: ManifoldRoughPath):
    """(chart_id, x) per global grid index, segment-boundary points
    attributed to the earlier chart."""
    out = []
    for si, seg in enumerate(mrp.segments):
        start = 0 if si == 0 else 1
        for x in seg.rough.trace[start:]:
            out.append((seg.chart_id, x))
    return out


def _run(fn):
    """Map library failures onto the CLI exit-code contract."""
    import functools

    @functools.wraps(fn)
    def wrapped(*a, **kw):
        try:
            fn(*a, **kw)
        except ConfigError as e:
            click.echo(f"config error: {e}", err=True)
            sys.exit(EXIT_CONFIG)
        except AdmissibilityError as e:
            click.echo(f"admissibility failure: {e}", err=True)
            sys.exit(EXIT_ADMISSIBILITY)
        except NonConvergence as e:
            click.echo(f"numerical non-convergence: {e}", err=True)
            sys.exit(EXIT_NONCONVERGENCE)
    return wrapped


def _outdir(out: str) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


@click.group()
def main():
    """Non-geometric rough paths on manifolds: scenario runner."""


@main.command("lift")
@click.argument("config", type=click.Path())
@click.option("-o", "--out", default="out", show_default=True)
@_run
def cmd_lift(config, out):
    """Sample and lift the configured driver; write its rough-path CSV."""
    cfg = _load_config(config)
    rp = _driver_from_config(_require(cfg, "driver"))
    outdir = _outdir(out)
    rp.to_csv(outdir / "driver.csv")
    with open(outdir / "driver.json", "w") as fh:
        fh.write(rp.to_json())
    _write_manifest(outdir, "lift", cfg,
                    [outdir / "driver.csv", outdir / "driver.json"])


@main.command("integrate")
@click.argument("config", type=click.Path())
@click.option("-o", "--out", default="out", show_default=True)
@_run
def cmd_integrate(config, out):
    """Flat rough integral of the configured one-form."""
    cfg = _load_config(config)
    rp = _driver_from_config(_require(cfg, "driver"))
    H = _one_form_from_config(_require(cfg, "integrand"), rp)
    value, path, _ = rough_integral(H, rp)
    outdir = _outdir(out)
    e = path.trace.shape[1]
    cols = ["t"] + [f"I_{i+1}" for i in range(e)]
    _write_csv(outdir / "integral.csv", cols,
               [[t, *row] for t, row in zip(rp.times, path.trace)])
    _write_manifest(outdir, "integrate", cfg, [outdir / "integral.csv"],
                    {"value": np.atleast_1d(value).tolist()})


@main.command("solve-rde")
@click.argument("config", type=click.Path())
@click.option("-o", "--out", default="out", show_default=True)
@_run
def cmd_solve_rde(config, out):
    """Linear RDE dY = (A_g Y + b_g) dX^g with constant coefficients."""
    cfg = _load_config(config)
    rp = _driver_from_config(_require(cfg, "driver"))
    fcfg = _require(cfg, "field")
    A = np.asarray(_require(fcfg, "A", "field"), dtype=float)   # (e, d, e)
    if A.ndim != 3:
        raise ConfigError("field A must have shape (e, d, e)")
    e = A.shape[0]
    b = np.asarray(fcfg.get("b", np.zeros((e, rp.dim))), dtype=float)
    y0 = np.asarray(_require(fcfg, "y0", "field"), dtype=float)
    sol = solve_linear(lambda x: A, lambda x: b, rp, y0)
    if sol.status != "global":
        raise NonConvergence(f"RDE exploded at t = {sol.t_star}")
    outdir = _outdir(out)
    cols = ["t"] + [f"Y_{i+1}" for i in range(e)]
    _write_csv(outdir / "solution.csv", cols,
               [[t, *row] for t, row in zip(sol.times, sol.trace)])
    _write_manifest(outdir, "solve-rde", cfg, [outdir / "solution.csv"],
                    {"status": sol.status})


@main.command("manifold-integrate")
@click.argument("config", type=click.Path())
@click.option("-o", "--out", default="out", show_default=True)
@_run
def cmd_manifold_integrate(config, out):
    """Connection-corrected integral of d(ambient coordinate) along a
    chart-driven manifold path."""
    cfg = _load_config(config)
    mfd = _manifold_from_config(cfg)
    rp = _driver_from_config(_require(cfg, "driver"))
    chart_id = cfg.get("chart", next(iter(mfd.charted.charts)))
    mrp = _single_chart_path(mfd, chart_id, rp, cfg.get("x0"))
    idx = int(cfg.get("ambient_index", 0))
    charts = mfd.charted.charts

    def Df(cid, x):
        return np.asarray(charts[cid].diota(x), dtype=float)[idx]

    def D2f(cid, x):
        return np.asarray(charts[cid].d2iota(x), dtype=float)[idx]

    H = exact_one_form(mrp, Df, D2f)
    value, path, _ = rough_integral_nabla(H, mrp, mfd.connection)
    outdir = _outdir(out)
    _write_csv(outdir / "integral.csv", ["t", "I_1"],
               [[t, *np.atleast_1d(row)] for t, row in zip(mrp.times, path)])
    _write_manifest(outdir, "manifold-integrate", cfg,
                    [outdir / "integral.csv"],
                    {"value": np.atleast_1d(value).tolist()})


@main.command("constrained")
@click.argument("config", type=click.Path())
@click.option("-o", "--out", default="out", show_default=True)
@_run
def cmd_constrained(config, out):
    """Constrained integral along the projection of the ambient driver."""
    cfg = _load_config(config)
    mfd = _manifold_from_config(cfg)
    if mfd.embedding is None:
        raise ConfigError(f"manifold {mfd.name!r} has no ambient embedding")
    rp = _driver_from_config(_require(cfg, "driver"))
    if rp.dim != mfd.embedding.ambient_dim:
        raise ConfigError(f"driver dimension {rp.dim} != ambient dimension "
                          f"{mfd.embedding.ambient_dim}")
    x0 = cfg.get("x0")
    if x0 is not None:
        rp = RoughPath(rp.times, rp.trace - rp.trace[0] + np.asarray(x0, dtype=float),
                       rp.level2, rp.p)
    # canonical constrained path: pushforward through the nearest-point
    # projection (trace exactly on the manifold)
    con = pushforward_rough(mfd.embedding.project, mfd.embedding.dproj, rp)
    H = _one_form_from_config(_require(cfg, "integrand"), con)
    res = constrained_integral(H, con, mfd.embedding)
    outdir = _outdir(out)
    con.to_csv(outdir / "constrained_path.csv")
    _write_manifest(outdir, "constrained", cfg,
                    [outdir / "constrained_path.csv"],
                    {"value": np.atleast_1d(res["value"]).tolist(),
                     "form_gap": res["form_gap"]})


@main.command("transport")
@click.argument("config", type=click.Path())
@click.option("-o", "--out", default="out", show_default=True)
@_run
def cmd_transport(config, out):
    """Parallel transport of a frame along a chart-driven path."""
    cfg = _load_config(config)
    mfd = _manifold_from_config(cfg)
    tb = _tb_lift(cfg, mfd)
    rp = _driver_from_config(_require(cfg, "driver"))
    chart_id = cfg.get("chart", next(iter(mfd.charted.charts)))
    mrp = _single_chart_path(mfd, chart_id, rp, cfg.get("x0"))
    m = mfd.dim
    frame0 = np.asarray(cfg.get("frame0", np.eye(m)), dtype=float)
    res = parallel_transport(mrp, mfd.connection, tb, frame0)
    outdir = _outdir(out)
    cols = ["t"] + [f"Phi_{i+1}{j+1}" for i in range(m) for j in range(m)]
    _write_csv(outdir / "frames.csv", cols,
               [[t, *F.ravel()] for t, F in zip(mrp.times, res["frames"])])
    _write_manifest(outdir, "transport", cfg, [outdir / "frames.csv"],
                    {"roundtrip_residual": res["roundtrip_residual"]})


@main.command("develop")
@click.argument("config", type=click.Path())
@click.option("-o", "--out", default="out", show_default=True)
@_run
def cmd_develop(config, out):
    """Roll the configured flat driver onto the manifold."""
    cfg = _load_config(config)
    mfd = _manifold_from_config(cfg)
    tb = _tb_lift(cfg, mfd)
    Z = _driver_from_config(_require(cfg, "driver"))
    chart0 = cfg.get("chart", next(iter(mfd.charted.charts)))
    x0 = np.asarray(_require(cfg, "x0"), dtype=float)
    m = mfd.dim
    frame0 = np.asarray(cfg.get("frame0", np.eye(m)), dtype=float)
    res = develop(Z, mfd, mfd.connection, tb, chart0, x0, frame0)
    if res["status"] != "complete":
        raise NonConvergence(f"development exited at t = {res['t_star']}")
    mrp = res["path"]
    amb = mrp.ambient_trace()
    outdir = _outdir(out)
    e = amb.shape[1]
    cols = ["t"] + [f"X_{i+1}" for i in range(e)]
    _write_csv(outdir / "developed.csv", cols,
               [[t, *row] for t, row in zip(mrp.times, amb)])
    _write_manifest(outdir, "develop", cfg, [outdir / "developed.csv"],
                    {"status": res["status"]})


@main.command("antidevelop")
@click.argument("config", type=click.Path())
@click.option("-o", "--out", default="out", show_default=True)
@_run
def cmd_antidevelop(config, out):
    """Roll a chart-driven manifold path onto its start tangent space."""
    cfg = _load_config(config)
    mfd = _manifold_from_config(cfg)
    tb = _tb_lift(cfg, mfd)
    rp = _driver_from_config(_require(cfg, "driver"))
    chart_id = cfg.get("chart", next(iter(mfd.charted.charts)))
    mrp = _single_chart_path(mfd, chart_id, rp, cfg.get("x0"))
    m = mfd.dim
    frame0 = np.asarray(cfg.get("frame0", np.eye(m)), dtype=float)
    Z = antidevelop(mrp, mfd.connection, tb, frame0)
    outdir = _outdir(out)
    Z.to_csv(outdir / "antideveloped.csv")
    _write_manifest(outdir, "antidevelop", cfg,
                    [outdir / "antideveloped.csv"])


# ------------------------------------------------------------------
# scenarios


def _scenario_fig_bm_sphere(outdir: Path, seed: int, coarse_n: int,
                            fine_ratio: int, T: float) -> list:
    """2-D Brownian path in the start tangent plane and its development
    onto the sphere, with the rolling ambient frame."""
    mfd = get_manifold("s2")
    tb = lift_connection(mfd.connection, "horizontal", metric=mfd.metric)
    ft, tr = sample_bm(2, T, coarse_n * fine_ratio, seed)
    Z = stochastic_lift(ft, tr, coarse_n, "strat")
    x0 = np.zeros(2)
    frame0 = _orthonormal_frame(mfd, "north", x0)
    res = develop(Z, mfd, mfd.connection, tb, "north", x0, frame0)
    mrp = res["path"]
    amb = mrp.ambient_trace()
    charts = mfd.charted.charts
    rows = []
    for (t, z, y, F, (cid, x)) in zip(Z.times, Z.trace, amb, res["frames"],
                                      _walk(mrp)):
        J = np.asarray(charts[cid].diota(x), dtype=float)
        E = J @ F                                       # ambient frame columns
        rows.append([t, z[0], z[1], y[0], y[1], y[2], *E[:, 0], *E[:, 1]])
    cols = ["t", "z_1", "z_2", "x", "y", "z",
            "e1_x", "e1_y", "e1_z", "e2_x", "e2_y", "e2_z"]
    path = outdir / "fig-bm-sphere.csv"
    _write_csv(path, cols, rows, comments=[f"status: {res['status']}"])
    return [path]


def _scenario_fig_torsion(outdir: Path, coarse_n: int, T: float) -> list:
    """Rugby-ball curve against its development under the antisymmetric
    torsion connection on R^3."""
    mfd = get_manifold("r3-torsion")
    tb = lift_connection(mfd.connection, "horizontal")
    d, fn = _CURVES["torsion"]
    Z = smooth_lift(np.linspace(0.0, T, coarse_n + 1), fn, d)
    res = develop(Z, mfd, mfd.connection, tb, "main", Z.trace[0], np.eye(3))
    X = res["path"].ambient_trace()
    rows = [[t, *z, *x] for t, z, x in zip(Z.times, Z.trace, X)]
    cols = ["t", "z_1", "z_2", "z_3", "x_1", "x_2", "x_3"]
    path = outdir / "fig-torsion.csv"
    dev = float(np.abs(X - Z.trace).max())
    _write_csv(path, cols, rows, comments=[f"max-deviation: {_fmt(dev)}"])
    return [path]


_HORMANDER_CASES = {
    # (manifold, chart, x0, tangent-plane basis columns, horizon)
    1: ("r3-torsion", "main", [0.0, 0.0, 0.0],
        [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], 1.0),
    2: ("r3-foliated", "spherical", [1.0, np.pi / 2, 0.0],
        [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], 0.5),          # leaf-tangent
    3: ("r3-foliated", "spherical", [1.0, np.pi / 2, 0.0],
        [[np.sin(np.pi / 4), 0.0], [0.0, 1.0], [np.cos(np.pi / 4), 0.0]], 0.5),
    4: ("r3-foliated", "spherical", [1.0, np.pi / 2, 0.0],
        [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], 0.5),          # radial
}


def _scenario_fig_hormander(outdir: Path, case: int, nsamples: int,
                            coarse_n: int, seed: int) -> list:
    if case not in _HORMANDER_CASES:
        raise ConfigError(f"hormander case must be 1..4, got {case}")
    name, chart, x0, basis, T = _HORMANDER_CASES[case]
    mfd = get_manifold(name)
    res = hormander_cloud_scenario(mfd, np.array(basis), chart,
                                   np.array(x0), nsamples=nsamples,
                                   coarse_n=coarse_n, T=T, seed0=seed)
    eig = res["pca_eigenvalues"]
    rows = [[s, *p] for s, p in enumerate(res["points"])]
    path = outdir / f"fig-hormander-case{case}.csv"
    _write_csv(path, ["seed", "x", "y", "z"], rows,
               comments=[f"pca-eigenvalues: {' '.join(_fmt(v) for v in eig)}",
                         f"n-complete: {res['n_complete']}"])
    return [path]


def _scenario_einstein(outdir: Path, nseeds: int, coarse_n: int,
                       fine_ratio: int, seed: int) -> list:
    mfd = get_manifold("s2")
    res = einstein_decay_scenario(mfd, nseeds=nseeds, coarse_n=coarse_n,
                                  fine_ratio=fine_ratio, seed0=seed)
    cols = ["t", "component", "cross_mean", "cross_sem", "self_mean",
            "self_sem", "cross_theory", "self_theory"]
    rows = []
    for i, t in enumerate(res["eval_times"]):
        for c in range(res["cross_mean"].shape[1]):
            rows.append([t, c + 1,
                         res["cross_mean"][i, c], res["cross_sem"][i, c],
                         res["self_mean"][i, c], res["self_sem"][i, c],
                         res["cross_theory"][i], res["self_theory"][i]])
    path = outdir / "einstein.csv"
    _write_csv(path, cols, rows,
               comments=[f"lambda: {_fmt(res['lambda'])}",
                         f"n-seeds: {nseeds}"])
    return [path]


@main.command("scenario")
@click.argument("name")
@click.option("-o", "--out", default="out", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--case", default=1, show_default=True, help="hormander case 1..4")
@click.option("--nsamples", default=1000, show_default=True)
@click.option("--nseeds", default=200, show_default=True)
@click.option("--coarse-n", default=None, type=int)
@click.option("--fine-ratio", default=64, show_default=True)
@click.option("--t", "horizon", default=None, type=float)
@_run
def cmd_scenario(name, out, seed, case, nsamples, nseeds, coarse_n,
                 fine_ratio, horizon):
    """Emit one of the figure datasets: fig-bm-sphere, fig-torsion,
    fig-hormander (--case 1..4), einstein."""
    outdir = _outdir(out)
    if name == "fig-bm-sphere":
        outputs = _scenario_fig_bm_sphere(outdir, seed, coarse_n or 512,
                                          fine_ratio, horizon or 1.0)
    elif name == "fig-torsion":
        outputs = _scenario_fig_torsion(outdir, coarse_n or 2048,
                                        horizon or 2.0)
    elif name == "fig-hormander":
        outputs = _scenario_fig_hormander(outdir, case, nsamples,
                                          coarse_n or 64, seed)
    elif name == "einstein":
        outputs = _scenario_einstein(outdir, nseeds, coarse_n or 100,
                                     fine_ratio, seed)
    else:
        raise ConfigError(f"unknown scenario {name!r}")
    cfg = {"scenario": name, "driver": {"seed": seed},
           "case": case if name == "fig-hormander" else None}
    _write_manifest(outdir, f"scenario {name}", cfg, outputs)


if __name__ == "__main__":
    main()
