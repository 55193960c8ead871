"""Command-line front end: ``stabman <command> <config>``.

Every command reads a YAML or JSON config (schema below), writes
``<output_dir>/<command>.jsonl`` (one JSON object per line, keys sorted, a
``meta`` record first) and, where relevant, CSV grids next to it.  Reports
contain no timestamps, so a fixed config and seed give identical bytes.

Config schema (``RunConfig``)::

    field:                # required except for analyze with a matrix
      kind: polynomial    # or translated (Y, G, mu0) for foliation commands
      n: 2
      s: 0
      terms: [{out: 0, exps: [1, 0], coef: -1.0}, ...]
    matrix: null          # analyze: inline rows or a CSV path
    cut: 0.0              # splitting cut
    gamma: auto           # or a number in I_A
    r: 1.0
    grid_n: null          # nodes; overrides h
    h: null               # step (default 0.01 for graphs, 0.02 for charts)
    horizon: auto         # or a number T
    truncation: adapted   # adapted | canonical | number
    extrapolate: false
    picard_tol: 1.0e-13
    integrator_tol: 1.0e-11
    tail_tol: 1.0e-12
    constant_overrides: {}
    seed: 0
    output_dir: out
    points: null          # list of {z: [...], mu: [...]}
    jet_order: 1
    invariance_horizon: 10.0
    trials: 200
    gate: strict          # contraction: strict | report
    mu_samples: null      # straighten / verify-foliation, G-coordinates
    eps_values: [0.5, 0.1, 0.02]
    overlap_mu0: null     # second base point for the overlap check
    n_grid: 7             # points per axis of chart grids

The thread count comes from the ``STABMAN_THREADS`` environment variable.
Exit status: 0 on success, 2 on a library error (a structured ``error``
record is written to the report and to stderr), 3 on a bad config.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, fields
import hashlib
import json
import math
import os
from pathlib import Path
import sys

import numpy as np
import yaml

from .errors import ConfigError, StabmanError
from .field import build_family, polynomial_from_terms
from .hypotheses import build_splitting, resolve_constants, smallness_thresholds
from .spectral import analyze_matrix, as_matrix

SCHEMA = "stabman-report/1"
COMMANDS = ("analyze", "thresholds", "solve-graph", "verify-graph", "straighten",
            "verify-foliation", "contraction")
_CHUNK = 32


@dataclass
class RunConfig:
    """Parsed run configuration; see the module docstring for the schema."""

    field: dict | None = None
    matrix: object = None
    cut: float = 0.0
    gamma: object = "auto"
    r: float = 1.0
    grid_n: int | None = None
    h: float | None = None
    horizon: object = "auto"
    truncation: object = "adapted"
    extrapolate: bool = False
    picard_tol: float = 1e-13
    integrator_tol: float = 1e-11
    tail_tol: float = 1e-12
    constant_overrides: dict = dc_field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"
    points: list | None = None
    jet_order: int = 1
    invariance_horizon: float = 10.0
    trials: int = 200
    gate: str = "strict"
    mu_samples: list | None = None
    eps_values: list = dc_field(default_factory=lambda: [0.5, 0.1, 0.02])
    overlap_mu0: list | None = None
    n_grid: int = 7
    base_dir: str = "."
    sha256: str = ""

    @property
    def gamma_value(self) -> float | None:
        return None if self.gamma in (None, "auto") else float(self.gamma)

    @property
    def T(self):
        return "auto" if self.horizon in (None, "auto") else float(self.horizon)


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_config(path) -> RunConfig:
    """Parse and validate a config file.

    Raises
    ------
    ConfigError
        Unknown keys, non-positive tolerances or unreadable input.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError("cannot read config", path=str(path), reason=str(exc)) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping", path=str(path))
    known = {f.name for f in fields(RunConfig)} - {"base_dir", "sha256"}
    extra = sorted(set(raw) - known)
    if extra:
        raise ConfigError("unknown config keys", keys=extra)
    cfg = RunConfig(**raw)
    cfg.base_dir = str(path.parent)
    cfg.sha256 = hashlib.sha256(_canonical(raw).encode()).hexdigest()
    for name in ("picard_tol", "integrator_tol", "tail_tol"):
        val = float(getattr(cfg, name))
        if not val > 0:
            raise ConfigError("tolerances must be positive", name=name, value=val)
        setattr(cfg, name, val)
    if cfg.h is not None and not float(cfg.h) > 0:
        raise ConfigError("h must be positive", h=cfg.h)
    if not float(cfg.r) > 0:
        raise ConfigError("r must be positive", r=cfg.r)
    if cfg.gate not in ("strict", "report"):
        raise ConfigError("gate must be 'strict' or 'report'", gate=cfg.gate)
    return cfg


def _clean(x):
    # JSON-safe, deterministic representation
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, complex) or isinstance(x, np.complexfloating):
        return [_clean(float(x.real)), _clean(float(x.imag))]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


class Report:
    """Ordered collection of records written as JSON lines."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.meta = {
            "record": "meta", "schema": SCHEMA, "command": command,
            "config_sha256": cfg.sha256, "seed": int(cfg.seed),
            "constants": resolve_constants(cfg.constant_overrides),
            "xi": None, "T": None, "N": None, "h": None,
        }
        self.records = []

    def set_grid(self, op, xi=None, truncation=None) -> None:
        self.meta.update({"T": op.T, "N": op.N, "h": op.h, "xi": xi})
        if truncation is not None:
            self.meta["truncation"] = truncation

    def add(self, kind: str, **data) -> None:
        self.records.append({"record": kind, **data})

    def lines(self) -> list[str]:
        return [json.dumps(_clean(r), sort_keys=True) for r in [self.meta] + self.records]

    def write(self, out_dir: Path) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        dest = out_dir / f"{self.command}.jsonl"
        dest.write_text("\n".join(self.lines()) + "\n")
        return dest


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("STABMAN_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items: list) -> list:
    # results keep the input order; chunking is independent of the thread count
    n = _threads()
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _chunks(P: np.ndarray) -> list:
    return [P[i:i + _CHUNK] for i in range(0, len(P), _CHUNK)]


def _family(cfg: RunConfig):
    if not cfg.field:
        raise ConfigError("config needs a 'field' entry")
    try:
        return build_family(cfg.field)
    except (KeyError, TypeError) as exc:
        raise ConfigError("malformed field spec", reason=str(exc)) from exc


def _matrix(cfg: RunConfig) -> np.ndarray:
    m = cfg.matrix
    if isinstance(m, str):
        p = Path(m)
        if not p.is_absolute():
            p = Path(cfg.base_dir) / p
        try:
            return as_matrix(np.loadtxt(p, delimiter=",", ndmin=2))
        except OSError as exc:
            raise ConfigError("cannot read matrix CSV", path=str(p)) from exc
    return as_matrix(m)


def _graph_context(cfg: RunConfig, f=None):
    from .graph import make_graph_context

    f = _family(cfg) if f is None else f
    return make_graph_context(
        f, cut=float(cfg.cut), gamma=cfg.gamma_value, r=float(cfg.r),
        h=0.01 if cfg.h is None else float(cfg.h), grid_n=cfg.grid_n, T=cfg.T,
        truncation=cfg.truncation, constants=cfg.constant_overrides,
        picard_tol=cfg.picard_tol, seed=int(cfg.seed), tail_tol=cfg.tail_tol,
        extrapolate=bool(cfg.extrapolate),
    )


def _points(cfg: RunConfig, gctx) -> np.ndarray:
    from .graph import delta_ball_grid

    if cfg.points is None:
        return delta_ball_grid(gctx)
    rows = []
    for pt in cfg.points:
        z = np.asarray(pt.get("z", []), dtype=float).reshape(gctx.p)
        mu = np.asarray(pt.get("mu", []), dtype=float).reshape(gctx.s)
        rows.append(np.concatenate([z, mu]))
    return np.array(rows).reshape(-1, gctx.p + gctx.s)


def _constant_records(rep: Report, consts: dict, used: dict) -> None:
    for name in sorted(used):
        rep.add("constant_use", quantity=name, constants={c: consts[c] for c in used[name]})


# -- commands -----------------------------------------------------------------

def cmd_analyze(cfg: RunConfig, rep: Report, out: Path) -> None:
    A = _matrix(cfg) if cfg.matrix is not None else _family(cfg).A
    sa = analyze_matrix(A)
    rep.add("spectral", n=sa.n, eigenvalues=[complex(e) for e in sa.eigenvalues],
            multiplicities=list(sa.multiplicities), op_norm=sa.op_norm,
            family_angle=sa.family_angle, M_A=sa.M_A, m_A=sa.m_A,
            gen_eigenspaces=[B for B in sa.gen_eigenspaces])
    for name in ("c_A", "K_A", "Kp_A"):
        rep.add("constant", name=name, value=getattr(sa, name))
    sp = build_splitting(sa, float(cfg.cut))
    rep.add("splitting", p=sp.p, q=sp.q, cut=sp.cut, M_AF=sp.M_AF, m_AG=sp.m_AG, g_A=sp.g_A,
            angle=sp.angle, c_FG=sp.c_FG, I_A=list(sp.I_A), gamma_tilde=sp.gamma_tilde,
            F_basis=sp.F_basis, G_basis=sp.G_basis)


def cmd_thresholds(cfg: RunConfig, rep: Report, out: Path) -> None:
    from .field import sampled_norms

    f = _family(cfg)
    sa = analyze_matrix(f.A)
    sp = build_splitting(sa, float(cfg.cut))
    gamma = sp.gamma_tilde if cfg.gamma_value is None else cfg.gamma_value
    norms = sampled_norms(f, float(cfg.r), seed=int(cfg.seed))
    thr = smallness_thresholds(sp, sa, gamma, norms.M2_hat, float(cfg.r),
                               resolve_constants(cfg.constant_overrides))
    rep.add("norms", **norms.as_dict())
    d = thr.as_dict()
    for name in sorted(d):
        if name in ("constants", "constants_used"):
            continue
        used = thr.constants_used.get(name, ())
        rep.add("threshold", name=name, value=d[name],
                constants={c: thr.constants[c] for c in used})


def cmd_solve_graph(cfg: RunConfig, rep: Report, out: Path) -> None:
    from .graph import phi_batch, phi_grid_csv, phi_jet

    gctx = _graph_context(cfg)
    rep.set_grid(gctx.op, gctx.xi, gctx.truncation)
    P = _points(cfg, gctx)
    p, s = gctx.p, gctx.s
    if gctx.extrapolate:
        gctx.fine_op()

    def solve(chunk):
        return phi_batch(gctx, chunk[:, :p], chunk[:, p:] if s else None, return_info=True)

    infos = _pmap(solve, _chunks(P))
    vals = np.vstack([i.values for i in infos]) if infos else np.zeros((0, gctx.q))
    phi_grid_csv(out / "phi_grid.csv", gctx, P, vals)
    order = int(cfg.jet_order)

    def jet(w):
        return phi_jet(gctx, w[:p], w[p:] if s else None, k_max=order)

    jets = _pmap(jet, list(P))
    k = 0
    for info in infos:
        for j in range(len(info.values)):
            w = P[k]
            rep.add("phi", z=w[:p], mu=w[p:], value=info.values[j], xi=info.xi[j],
                    iterations=info.iterations[j], residual=info.residual[j],
                    inside_plateau=info.inside_plateau[j],
                    jet={str(o): jets[k][o] for o in sorted(jets[k])})
            k += 1


def cmd_verify_graph(cfg: RunConfig, rep: Report, out: Path) -> None:
    from .flowverify import graph_invariance_residual
    from .graph import check_phi_bounds, phi_grid_csv

    gctx = _graph_context(cfg)
    rep.set_grid(gctx.op, gctx.xi, gctx.truncation)
    P = _points(cfg, gctx)
    if gctx.extrapolate:
        gctx.fine_op()
    parts = _pmap(lambda c: check_phi_bounds(gctx, points=c), _chunks(P))
    keys = ("k0", "k1z", "k1mu", "k2")
    ratios = {k: np.concatenate([b.ratio[k] for b in parts]) for k in keys}
    measured = {k: np.concatenate([b.measured[k] for b in parts]) for k in keys}
    for k in keys:
        rr = ratios[k]
        rep.add("bound_ratio", key=k,
                max_ratio=float(np.nanmax(rr)) if np.any(np.isfinite(rr)) else 0.0,
                constants={c: gctx.constants[c] for c in ("C", "C0", "Kp") if c in gctx.constants})
    phi_grid_csv(out / "bound_ratios.csv", gctx, P, measured["k0"], ratios)
    p, s = gctx.p, gctx.s
    for w in P:
        if np.linalg.norm(w[:p]) == 0:
            continue
        res = graph_invariance_residual(gctx, w[:p], w[p:] if s else None,
                                        horizon=float(cfg.invariance_horizon),
                                        tol=cfg.integrator_tol)
        rep.add("invariance", z=w[:p], mu=w[p:], residual=res.residual,
                horizon=float(cfg.invariance_horizon), integrator_tol=cfg.integrator_tol)


def _chart_from(cfg: RunConfig, mu0=None):
    from .foliation import build_chart

    spec = cfg.field or {}
    if spec.get("kind") != "translated":
        raise ConfigError("foliation commands need a field of kind 'translated'")
    n = int(spec["n"])
    Y = polynomial_from_terms(spec.get("Y", []), n, n)
    ccfg = {"picard_tol": cfg.picard_tol, "tail_tol": cfg.tail_tol, "seed": int(cfg.seed),
            "constants": cfg.constant_overrides}
    if cfg.h is not None:
        ccfg["h"] = float(cfg.h)
    base = spec.get("mu0") if mu0 is None else mu0
    return build_chart(Y, np.asarray(spec["G"], dtype=float), base, float(cfg.r), ccfg)


def _mu_samples(cfg: RunConfig, chart) -> np.ndarray:
    if cfg.mu_samples is not None:
        return np.asarray(cfg.mu_samples, dtype=float).reshape(-1, chart.q)
    return np.linspace(-0.5, 0.5, 3)[:, None] * chart.R * np.ones((1, chart.q)) / math.sqrt(chart.q)


def _chart_meta(rep: Report, chart) -> None:
    rep.set_grid(chart.graph.op, chart.graph.xi, chart.graph.truncation)
    rep.add("chart", **chart.describe())


def _straightening_records(cfg, rep, chart, out: Path):
    from .foliation import straightening_residual

    sr = straightening_residual(chart, _mu_samples(cfg, chart), tol=cfg.integrator_tol)
    rep.add("straightening", **sr.as_dict(), integrator_tol=cfg.integrator_tol)
    n = chart.n
    cols = ["mu" + str(i + 1) for i in range(chart.q)] + ["w" + str(i + 1) for i in range(n)]
    cols += ["x" + str(i + 1) for i in range(n)] + ["limit_residual", "decay_rate"]
    rows = [r["mu"] + r["w"] + r["start"] + [r["limit_residual"],
            np.nan if r["decay_rate"] is None else r["decay_rate"]] for r in sr.rows]
    np.savetxt(out / "straightening.csv", np.array(rows).reshape(-1, len(cols)), delimiter=",",
               header=",".join(cols), comments="", fmt="%.17g")
    return sr


def cmd_straighten(cfg: RunConfig, rep: Report, out: Path) -> None:
    from .foliation import eval_chart

    chart = _chart_from(cfg)
    _chart_meta(rep, chart)
    g = np.linspace(-1.0, 1.0, int(cfg.n_grid)) * chart.R / math.sqrt(chart.n)
    P = np.stack(np.meshgrid(*([g] * chart.n), indexing="ij"), -1).reshape(-1, chart.n) + chart.mu0
    fwd = np.vstack(_pmap(lambda c: eval_chart(chart, c, "forward"), _chunks(P)))
    inv = np.vstack(_pmap(lambda c: eval_chart(chart, c, "inverse"), _chunks(P)))
    n = chart.n
    cols = [f"x{i + 1}" for i in range(n)] + [f"forward{i + 1}" for i in range(n)]
    cols += [f"inverse{i + 1}" for i in range(n)]
    np.savetxt(out / "chart_grid.csv", np.hstack([P, fwd, inv]), delimiter=",",
               header=",".join(cols), comments="", fmt="%.17g")
    rep.add("chart_grid", n_points=len(P), max_forward_shift=float(np.max(np.linalg.norm(fwd - P, axis=1))))
    _straightening_records(cfg, rep, chart, out)


def cmd_verify_foliation(cfg: RunConfig, rep: Report, out: Path) -> None:
    from .foliation import ball_sample, c1_deviation, overlap_defect

    chart = _chart_from(cfg)
    _chart_meta(rep, chart)
    _straightening_records(cfg, rep, chart, out)
    for eps in cfg.eps_values:
        dev = c1_deviation(chart, float(eps), seed=int(cfg.seed))
        rep.add("c1_closeness", **dev.as_dict(), passed=dev.deviation <= float(eps),
                constants={"C3": chart.C3})
    if cfg.overlap_mu0 is not None:
        other = _chart_from(cfg, cfg.overlap_mu0)
        P = ball_sample(chart, chart.R, 256, int(cfg.seed))
        P = P[np.linalg.norm(P - other.mu0, axis=1) <= other.R]
        if len(P):
            d = overlap_defect(chart, other, P)
            worst = float(np.max(np.linalg.norm(d, axis=1)))
        else:
            worst = None
        rep.add("overlap", mu0=chart.mu0, mu1=other.mu0, n_points=len(P), max_defect=worst)


def cmd_contraction(cfg: RunConfig, rep: Report, out: Path) -> None:
    from .bump import truncate_family
    from .gammaspace import estimate_contraction_details, make_context

    f = _family(cfg)
    sa = analyze_matrix(f.A)
    sp = build_splitting(sa, float(cfg.cut))
    gamma = sp.gamma_tilde if cfg.gamma_value is None else cfg.gamma_value
    xi = None
    if not f.is_linear():
        # the estimate needs one global field, so 'adapted' falls back to
        # the canonical size
        if cfg.truncation in ("canonical", "adapted"):
            cfg_c = RunConfig(**{**cfg.__dict__, "truncation": "canonical"})
            gctx = _graph_context(cfg_c, f)
            xi = gctx.xi
        elif isinstance(cfg.truncation, (int, float)):
            xi = float(cfg.truncation)
        else:
            raise ConfigError("truncation must be 'adapted', 'canonical' or a number",
                              truncation=cfg.truncation)
        f = truncate_family(f, xi, float(cfg.r))
    grid = {"grid_n": cfg.grid_n} if cfg.grid_n is not None else {"h": 0.01 if cfg.h is None else float(cfg.h)}
    ctx = make_context(f, sp, gamma, T=cfg.T, tail_tol=cfg.tail_tol, gate=cfg.gate, sa=sa,
                       seed=int(cfg.seed), **grid)
    rep.set_grid(ctx, xi)
    est = estimate_contraction_details(ctx, trials=int(cfg.trials), seed=int(cfg.seed))
    rep.add("gate", **ctx.gate.as_dict())
    rep.add("contraction", max_ratio=est.max_ratio, trials=est.trials, bound=0.5,
            passed=est.max_ratio <= 0.5 + 1e-6)


HANDLERS = {
    "analyze": cmd_analyze, "thresholds": cmd_thresholds, "solve-graph": cmd_solve_graph,
    "verify-graph": cmd_verify_graph, "straighten": cmd_straighten,
    "verify-foliation": cmd_verify_foliation, "contraction": cmd_contraction,
}


def run(command: str, config_path, output_dir=None) -> int:
    """Run one command; returns the exit status."""
    if command not in HANDLERS:
        print(json.dumps({"record": "error", "code": "ConfigError",
                          "message": f"unknown command {command!r}"}), file=sys.stderr)
        return 3
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(json.dumps(_clean(exc.record()), sort_keys=True), file=sys.stderr)
        return 3
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    if not out.is_absolute() and output_dir is None:
        out = Path(cfg.base_dir) / out
    out.mkdir(parents=True, exist_ok=True)
    rep = Report(command, cfg)
    status = 0
    try:
        HANDLERS[command](cfg, rep, out)
    except ConfigError as exc:
        rep.add("error", **exc.record())
        status = 3
    except StabmanError as exc:
        rep.add("error", **exc.record())
        status = 2
    dest = rep.write(out)
    if status:
        print(json.dumps(_clean(rep.records[-1]), sort_keys=True), file=sys.stderr)
    else:
        print(str(dest))
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stabman", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="YAML or JSON run configuration")
    parser.add_argument("-o", "--output-dir", default=None,
                        help="override the config's output_dir")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
