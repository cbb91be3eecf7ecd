"""Scenario ingestion, sweep orchestration, rate fitting, and persistence.

A scenario is a JSON file naming curves, strengths, the angular velocity, a
strictly decreasing epsilon sweep, and optional resolution/tolerance
overrides.  Running it performs, per epsilon: injectivity certificates,
layer construction, the mapped Poisson solves, the layer-velocity field and
its linearity defect, and the functional report; the sweep then yields
fitted decay exponents and a rigidity verdict.  Outputs are a JSON artifact
and a flat CSV, both byte-stable for a fixed spec.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .birkhoff_rott import (
    ConstantStrength,
    FourierStrength,
    SemicircleStrength,
    SheetConfiguration,
    concentricity_residual,
    stationarity_residual,
)
from .elliptic import assemble_and_solve, boundary_gradient_check, decompose_p, dump_fields, make_problem
from .functional import (
    FunctionalReport,
    first_variation_direct,
    positivity_decomposition,
    rigidity_verdict,
)
from .geometry import GeometryError, make_circle, make_fourier_curve, make_segment
from .layer import build_layer, injectivity_certificate, linearity_defect, velocity_on_grid

log = logging.getLogger("vortexlayer")


class ConfigError(ValueError):
    """Scenario file failed to parse or violated a spec invariant."""


DEFAULT_RESOLUTIONS = {
    "n_alpha_closed": 512,
    "n_alpha_open": 768,
    "n_eta": 16,
    "n_res": 256,
    "n_quad": 2048,
    "n_panels": 1024,
    "defect_alpha_stride": 2,
    "cert_samples": 10000,
}

DEFAULT_TOLERANCES = {
    "closed_residual": 1e-6,
    "open_residual": 1e-4,
    "solver_tol": 1e-10,
    "floor_tol": 1e-3,
    "residual_small_closed": 1e-6,
    "residual_small_open": 1e-3,
}

DEFAULT_EPS_SWEEP = [0.08, 0.04, 0.02, 0.01]

_CURVE_KEYS = {
    "circle": {"center", "radius"},
    "segment": {"half_length"},
    "fourier": {"base_radius", "modes"},
}
_STRENGTH_KEYS = {
    "constant": {"value"},
    "fourier": {"mean", "cos_modes"},
    "semicircle": {"omega"},
}
_CLOSED_STRENGTHS = {"constant", "fourier"}
_OPEN_STRENGTHS = {"semicircle"}
_CLOSED_CURVES = {"circle", "fourier"}


@dataclass(frozen=True)
class ScenarioSpec:
    """Validated scenario description; invariants are enforced at load time."""

    name: str
    curves: tuple
    strengths: tuple
    omega: float
    eps_sweep: tuple
    resolutions: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 1815

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "curves": [dict(c) for c in self.curves],
            "strengths": [dict(s) for s in self.strengths],
            "omega": self.omega,
            "eps_sweep": list(self.eps_sweep),
            "resolutions": dict(self.resolutions),
            "tolerances": dict(self.tolerances),
            "seed": self.seed,
        }


def _check_typed(entry, kind, allowed, where):
    if not isinstance(entry, dict) or "type" not in entry:
        raise ConfigError(f"{where}: each {kind} needs a 'type' field")
    t = entry["type"]
    if t not in allowed:
        raise ConfigError(f"{where}: unknown {kind} type {t!r} (allowed: {sorted(allowed)})")
    extra = set(entry) - allowed[t] - {"type"}
    if extra:
        raise ConfigError(f"{where}: unknown fields {sorted(extra)} for {kind} type {t!r}")
    return t


def validate_spec(raw: dict, where: str = "scenario") -> ScenarioSpec:
    known = {"name", "curves", "strengths", "omega", "eps_sweep",
             "resolutions", "tolerances", "seed"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"{where}: unknown top-level fields {sorted(extra)}")
    for req in ("name", "curves", "strengths"):
        if req not in raw:
            raise ConfigError(f"{where}: missing required field {req!r}")

    curves = raw["curves"]
    strengths = raw["strengths"]
    if len(curves) != len(strengths):
        raise ConfigError(f"{where}: curves and strengths must have equal length "
                          f"({len(curves)} vs {len(strengths)})")
    if not curves:
        raise ConfigError(f"{where}: at least one curve is required")

    seen_open = False
    for i, (c, s) in enumerate(zip(curves, strengths)):
        ct = _check_typed(c, "curve", _CURVE_KEYS, f"{where}.curves[{i}]")
        st = _check_typed(s, "strength", _STRENGTH_KEYS, f"{where}.strengths[{i}]")
        closed = ct in _CLOSED_CURVES
        if closed and st not in _CLOSED_STRENGTHS:
            raise ConfigError(
                f"{where}[{i}]: closed curve {ct!r} needs a closed-regularity strength, "
                f"got {st!r}")
        if not closed and st not in _OPEN_STRENGTHS:
            raise ConfigError(
                f"{where}[{i}]: open curve {ct!r} needs an endpoint-vanishing strength, "
                f"got {st!r}")
        if closed and seen_open:
            raise ConfigError(f"{where}: closed curves must be listed before open curves")
        seen_open = seen_open or not closed

    eps = [float(e) for e in raw.get("eps_sweep", DEFAULT_EPS_SWEEP)]
    if any(e <= 0 for e in eps):
        raise ConfigError(f"{where}: eps_sweep must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError(f"{where}: eps_sweep must be strictly decreasing")

    res = dict(DEFAULT_RESOLUTIONS)
    res.update(raw.get("resolutions", {}))
    extra = set(res) - set(DEFAULT_RESOLUTIONS)
    if extra:
        raise ConfigError(f"{where}: unknown resolution fields {sorted(extra)}")
    if res["n_eta"] % 2 != 0 or res["n_eta"] < 8:
        raise ConfigError(f"{where}: n_eta must be even and >= 8, got {res['n_eta']}")
    for k in ("n_alpha_closed", "n_alpha_open"):
        if res[k] < 8:
            raise ConfigError(f"{where}: {k} must be >= 8")

    tol = dict(DEFAULT_TOLERANCES)
    tol.update(raw.get("tolerances", {}))
    extra = set(tol) - set(DEFAULT_TOLERANCES)
    if extra:
        raise ConfigError(f"{where}: unknown tolerance fields {sorted(extra)}")

    return ScenarioSpec(name=str(raw["name"]),
                        curves=tuple(dict(c) for c in curves),
                        strengths=tuple(dict(s) for s in strengths),
                        omega=float(raw.get("omega", 0.0)),
                        eps_sweep=tuple(eps), resolutions=res, tolerances=tol,
                        seed=int(raw.get("seed", 1815)))


def load_scenario(path) -> ScenarioSpec:
    """Parse and validate a scenario file; errors carry line/field diagnostics."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}")
    return validate_spec(raw, where=str(path))


def bundled_scenario_names():
    base = resources.files("vortexlayer") / "scenarios"
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> ScenarioSpec:
    base = resources.files("vortexlayer") / "scenarios"
    path = base / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}; "
                          f"available: {bundled_scenario_names()}")
    raw = json.loads(path.read_text())
    return validate_spec(raw, where=name)


def build_configuration(spec: ScenarioSpec) -> SheetConfiguration:
    components = []
    for c, s in zip(spec.curves, spec.strengths):
        if c["type"] == "circle":
            curve = make_circle(c["center"], c["radius"])
        elif c["type"] == "segment":
            curve = make_segment(c["half_length"])
        else:
            curve = make_fourier_curve(c["base_radius"], [tuple(m) for m in c["modes"]])
        if s["type"] == "constant":
            strength = ConstantStrength(s["value"])
        elif s["type"] == "fourier":
            strength = FourierStrength(s["mean"], [tuple(m) for m in s["cos_modes"]])
        else:
            strength = SemicircleStrength(s["omega"], curve.half_length)
        components.append((curve, strength))
    return SheetConfiguration(components, omega=spec.omega)


# rate fitting -------------------------------------------------------------------

def fit_rate(pairs, log_correction: bool = False):
    """Least-squares slope of log|value| against log eps, with R^2.

    ``log_correction`` divides values by |log eps| first (for rates of the
    form eps^b |log eps|).  A zero value short-circuits to +inf.
    """
    pairs = [(float(e), float(v)) for e, v in pairs]
    if len(pairs) < 3:
        raise ValueError("fit_rate needs at least 3 (eps, value) pairs")
    eps = np.array([e for e, _ in pairs])
    vals = np.array([v for _, v in pairs])
    if np.any(vals < 0):
        raise ValueError("fit_rate needs nonnegative values")
    if np.any(vals == 0):
        return math.inf, 1.0
    if log_correction:
        vals = vals / np.abs(np.log(eps))
    x, y = np.log(eps), np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


# sweep runner -------------------------------------------------------------------

@dataclass
class RunArtifact:
    """Everything one scenario run produced, JSON-serializable via to_dict."""

    spec: ScenarioSpec
    residuals: dict
    concentricity: list | None
    records: list
    rates: dict
    verdict: dict
    runtime_seconds: float

    def successful_records(self):
        return [r for r in self.records if r.get("ok")]

    def to_dict(self) -> dict:
        return {
            "scenario": self.spec.to_dict(),
            "residuals": self.residuals,
            "concentricity": self.concentricity,
            "records": self.records,
            "rates": self.rates,
            "verdict": self.verdict,
            "runtime_seconds": round(self.runtime_seconds, 3),
        }


def _report_to_dict(report: FunctionalReport) -> dict:
    return {
        "epsilon": report.epsilon,
        "I_eps": report.I_eps,
        "I_tilde": report.I_tilde,
        "J_eps": report.J_eps,
        "A": list(report.A),
        "B": {f"{i + 1}_{j + 1}": v for (i, j), v in report.B.items()},
        "prec": [list(row) for row in report.prec],
        "areas": list(report.areas),
        "int_p": list(report.int_p),
        "c_eps": list(report.c_eps),
        "cs_gap": list(report.cs_gap),
        "iso_gap": list(report.iso_gap),
        "case2_bound": list(report.case2_bound),
        "talenti_sup_gap": list(report.talenti_sup_gap),
        "talenti_int_gap": list(report.talenti_int_gap),
    }


def _run_eps(config: SheetConfiguration, spec: ScenarioSpec, eps: float,
             g_cache=None) -> dict:
    res = spec.resolutions
    tol = spec.tolerances
    t0 = time.perf_counter()
    record = {"eps": eps, "ok": False}

    certs = []
    for i, (curve, strength) in enumerate(config.components):
        cert = injectivity_certificate(curve, strength, eps,
                                       n_samples=res["cert_samples"],
                                       seed=spec.seed + 97 * i)
        certs.append(cert)
    record["certificates"] = [
        {"c0": c.c0, "eps0": c.eps0, "worst_pair_ratio": c.worst_pair_ratio,
         "passed": c.passed} for c in certs]
    if not all(c.passed for c in certs):
        record["error"] = "injectivity certificate failed"
        record["seconds"] = time.perf_counter() - t0
        return record

    layers = []
    for i, (curve, strength) in enumerate(config.components):
        n_alpha = res["n_alpha_closed"] if curve.closed else res["n_alpha_open"]
        layers.append(build_layer(curve, strength, eps, n_alpha=n_alpha,
                                  n_eta=res["n_eta"]).with_certificate(certs[i]))

    solutions = [assemble_and_solve(make_problem(l), solver_tol=tol["solver_tol"])
                 for l in layers]

    # velocity/defect grids may be alpha-subsampled: the defect is smooth in
    # alpha and the panel integrals dominate the cost
    stride = max(1, int(res["defect_alpha_stride"]))
    vlayers = []
    for i, (curve, strength) in enumerate(config.components):
        n_alpha = res["n_alpha_closed"] if curve.closed else res["n_alpha_open"]
        vlayers.append(build_layer(curve, strength, eps, n_alpha=max(8, n_alpha // stride),
                                   n_eta=res["n_eta"]))
    v_grids = [velocity_on_grid(vlayers, l, n_panels=res["n_panels"]) for l in vlayers]
    defects = [linearity_defect(vlayers[i], config, i, all_layers=vlayers,
                                n_quad=res["n_quad"], v_grid=v_grids[i],
                                g_values=None if g_cache is None else g_cache[i])
               for i in range(len(vlayers))]

    report = positivity_decomposition(config, layers, solutions)
    vsolutions = [assemble_and_solve(make_problem(l), solver_tol=tol["solver_tol"])
                  for l in vlayers] if stride > 1 else solutions
    direct = first_variation_direct(config, vlayers, vsolutions, v_grids)

    record.update(_report_to_dict(report))
    record["defect_linearity"] = max(defects)
    record["defects"] = defects
    record["I_tilde_direct"] = direct[1]
    record["direct_gap"] = direct[1] - report.I_tilde
    record["flux_residual"] = [s.flux_residual for s in solutions]
    record["solver_residual"] = [s.solver_residual for s in solutions]
    record["max_abs_p"] = [s.max_abs_p() for s in solutions]
    decomp = []
    for i, s in enumerate(solutions):
        if s.problem.boundary == "closed":
            d = decompose_p(s)
            decomp.append({"beta": d.beta, "max_q_over_eps2": d.max_q_over_eps2,
                           "c_over_eps_gap": d.c_over_eps_gap,
                           "grad_tilde_deficit": d.grad_tilde_deficit,
                           "boundary_grad_q": boundary_gradient_check(s)})
        else:
            decomp.append(None)
    record["decomposition"] = decomp
    record["ok"] = True
    record["seconds"] = time.perf_counter() - t0
    record["_report"] = report  # in-memory only; stripped before serialization
    return record


def run_scenario(spec: ScenarioSpec, threads: int | None = None) -> RunArtifact:
    """Run a full epsilon sweep and classify the scenario."""
    t0 = time.perf_counter()
    config = build_configuration(spec)
    res = spec.resolutions
    residuals = stationarity_residual(config, n_res=res["n_res"], n_quad=res["n_quad"])
    log.info("scenario=%s stage=residuals br1=%.3e br2=%.3e", spec.name,
             residuals.max_br1, residuals.max_br2)

    conc = None
    try:
        conc = [float(v) for v in concentricity_residual(config)]
    except GeometryError:
        pass

    if threads is None:
        threads = int(os.environ.get("VORTEXLAYER_THREADS", "1"))

    # the g comparison field for the linearity defect is epsilon-independent:
    # precompute it once per curve on the defect grid
    from .layer import build_layer as _bl, defect_alpha_mask, g_field
    stride = max(1, int(res["defect_alpha_stride"]))
    g_cache = {}
    for i, (curve, strength) in enumerate(config.components):
        n_alpha = res["n_alpha_closed"] if curve.closed else res["n_alpha_open"]
        probe = _bl(curve, strength, spec.eps_sweep[0],
                    n_alpha=max(8, n_alpha // stride), n_eta=res["n_eta"])
        mask = defect_alpha_mask(probe)
        g_cache[i] = g_field(config, i, probe.alpha[mask], probe.eta,
                             n_quad=res["n_quad"])

    def safe_run(eps):
        try:
            return _run_eps(config, spec, eps, g_cache=g_cache)
        except Exception as exc:  # recorded, sweep continues
            return {"eps": eps, "ok": False, "error": f"{type(exc).__name__}: {exc}"}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(safe_run, spec.eps_sweep))
    else:
        records = [safe_run(e) for e in spec.eps_sweep]
    for r in records:
        log.info("scenario=%s stage=eps_point eps=%s ok=%s seconds=%.2f", spec.name,
                 r["eps"], r.get("ok"), r.get("seconds", float("nan")))

    good = [r for r in records if r.get("ok")]
    rates = {}
    if len(good) >= 3:
        pairs = [(r["eps"], r["defect_linearity"]) for r in good]
        rates["defect_exponent"], rates["defect_r2"] = fit_rate(pairs)
        pairs = [(r["eps"], abs(r["I_eps"])) for r in good]
        rates["abs_I_exponent_logcorr"], rates["abs_I_r2"] = fit_rate(pairs, log_correction=True)
        gaps = [(r["eps"], max(min(r["talenti_int_gap"]), 0.0)) for r in good]
        try:
            rates["int_gap_exponent"], rates["int_gap_r2"] = fit_rate(gaps)
        except ValueError:
            pass
        grads = [(r["eps"], max((d["boundary_grad_q"] for d in r["decomposition"] if d),
                                default=0.0)) for r in good]
        if all(v > 0 for _, v in grads):
            rates["boundary_grad_exponent"], rates["boundary_grad_r2"] = fit_rate(grads)

    if len(good) >= 3:
        reports = [r["_report"] for r in good]
        tol = spec.tolerances
        verdict = rigidity_verdict(
            reports, config, residuals=residuals,
            floor_tol=tol["floor_tol"],
            residual_tol_closed=tol["residual_small_closed"],
            residual_tol_open=tol["residual_small_open"]).to_dict()
    else:
        verdict = {"verdict": "INCONCLUSIVE",
                   "reason": f"only {len(good)} epsilon points succeeded (need 3)"}
    for r in records:
        r.pop("_report", None)

    residual_dict = {
        "br1": list(residuals.br1),
        "br2": list(residuals.br2),
        "c_i": list(residuals.c_i),
        "vector_residual": list(residuals.vector_residual),
    }
    return RunArtifact(spec=spec, residuals=residual_dict, concentricity=conc,
                       records=records, rates=rates, verdict=verdict,
                       runtime_seconds=time.perf_counter() - t0)


# persistence --------------------------------------------------------------------

def csv_header(n_curves: int) -> str:
    cols = ["eps", "I_eps", "I_tilde", "J_eps"]
    cols += [f"A_{i + 1}" for i in range(n_curves)]
    cols += [f"B_{i + 1}_{j + 1}" for i in range(n_curves) for j in range(i + 1, n_curves)]
    cols += ["residual_BR1", "residual_BR2", "defect_linearity", "talenti_int_gap"]
    return ",".join(cols)


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return repr(float(v))


def render_csv(artifact: RunArtifact) -> str:
    n = len(artifact.spec.curves)
    lines = [csv_header(n)]
    br1 = max(artifact.residuals["br1"])
    br2 = max(artifact.residuals["br2"])
    for r in artifact.records:
        row = [_fmt(r["eps"])]
        if r.get("ok"):
            row += [_fmt(r["I_eps"]), _fmt(r["I_tilde"]), _fmt(r["J_eps"])]
            row += [_fmt(a) for a in r["A"]]
            row += [_fmt(r["B"][f"{i + 1}_{j + 1}"]) for i in range(n)
                    for j in range(i + 1, n)]
            row += [_fmt(br1), _fmt(br2), _fmt(r["defect_linearity"]),
                    _fmt(min(r["talenti_int_gap"]))]
        else:
            pad = 3 + n + n * (n - 1) // 2 + 4
            row += ["nan"] * pad
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def emit_results(artifact: RunArtifact, out_dir, dump_solution_fields: bool = False) -> dict:
    """Write report.json and sweep.csv (and optional field dumps) under out_dir."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        report_path = os.path.join(out_dir, "report.json")
        csv_path = os.path.join(out_dir, "sweep.csv")
        with open(report_path, "w") as fh:
            json.dump(artifact.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(csv_path, "w") as fh:
            fh.write(render_csv(artifact))
    except OSError as exc:
        raise OSError(f"cannot write results under {out_dir!r}: {exc}") from exc

    paths = {"report": report_path, "csv": csv_path}
    if dump_solution_fields:
        config = build_configuration(artifact.spec)
        res = artifact.spec.resolutions
        for r in artifact.successful_records():
            for i, (curve, strength) in enumerate(config.components):
                n_alpha = res["n_alpha_closed"] if curve.closed else res["n_alpha_open"]
                layer = build_layer(curve, strength, r["eps"], n_alpha=n_alpha,
                                    n_eta=res["n_eta"])
                sol = assemble_and_solve(make_problem(layer),
                                         solver_tol=artifact.spec.tolerances["solver_tol"])
                path = os.path.join(out_dir, f"fields_eps{r['eps']:g}_curve{i + 1}.csv")
                dump_fields(sol, path)
                paths[f"fields_eps{r['eps']:g}_curve{i + 1}"] = path
    return paths
