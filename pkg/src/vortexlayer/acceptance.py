"""The acceptance matrix: every bundled scenario checked against closed-form
oracles and the asymptotic (epsilon -> 0) claims, each at a pinned tolerance.

Each criterion returns a CriterionResult; the CLI ``verify`` command and the
acceptance test module both consume this list.  Scenario runs are cached so
the whole matrix costs one pass over the bundled suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .birkhoff_rott import SheetConfiguration, stationarity_residual
from .elliptic import assemble_and_solve, make_problem, talenti_check
from .functional import OBSTRUCTED
from .geometry import make_circle
from .birkhoff_rott import ConstantStrength, one_sided_velocities, evaluate_BR
from .harness import (
    bundled_scenario_names,
    build_configuration,
    fit_rate,
    load_bundled,
    run_scenario,
)
from .layer import build_layer, injectivity_certificate

TWO_PI = 2.0 * np.pi
DEFAULT_SWEEP = (0.08, 0.04, 0.02, 0.01)


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion-{self.cid:02d} {self.name}: {self.detail}"


class SuiteCache:
    """Lazily runs bundled scenarios (and ad-hoc solves) exactly once."""

    def __init__(self, threads=None):
        self._artifacts = {}
        self._annulus = {}
        self.threads = threads

    def artifact(self, name):
        if name not in self._artifacts:
            t0 = time.perf_counter()
            self._artifacts[name] = run_scenario(load_bundled(name), threads=self.threads)
            self._artifacts[name].runtime_seconds = time.perf_counter() - t0
        return self._artifacts[name]

    def annulus_solution(self, eps, n_alpha=512, n_eta=16):
        key = (eps, n_alpha, n_eta)
        if key not in self._annulus:
            layer = build_layer(make_circle((0.0, 0.0), 1.0), ConstantStrength(1.0),
                                eps, n_alpha=n_alpha, n_eta=n_eta)
            t0 = time.perf_counter()
            sol = assemble_and_solve(make_problem(layer))
            self._annulus[key] = (sol, time.perf_counter() - t0)
        return self._annulus[key]


def _fmt_e(x):
    return f"{x:.3e}"


# criteria ----------------------------------------------------------------------

def criterion_1_annulus_poisson(cache: SuiteCache) -> CriterionResult:
    """Nodal annulus solution and c^eps against the closed form."""
    h = max(1.0 / 512, 1.0 / 16)
    worst_p, worst_c, worst_t = 0.0, 0.0, 0.0
    for eps in DEFAULT_SWEEP:
        sol, seconds = cache.annulus_solution(eps)
        layer = sol.layer
        r = np.linalg.norm(layer.positions, axis=-1)
        exact = -0.5 * r**2 + 0.5 * (1.0 + eps) ** 2
        worst_p = max(worst_p, float(np.max(np.abs(sol.p - exact))))
        worst_c = max(worst_c, abs(sol.c_eps - (eps + 0.5 * eps**2)))
        worst_t = max(worst_t, seconds)
    ok = worst_p <= 5 * (h**2 + 1e-10) and worst_c <= 1e-8 and worst_t < 10.0
    return CriterionResult(1, "annulus Poisson oracle", ok,
                           f"max|p-exact|={_fmt_e(worst_p)} (tol {_fmt_e(5 * (h**2 + 1e-10))}), "
                           f"max|c-exact|={_fmt_e(worst_c)} (tol 1e-08), "
                           f"max solve time {worst_t:.2f}s")


def criterion_2_talenti(cache: SuiteCache) -> CriterionResult:
    """Equality gaps on the annulus; a stable positive int-gap on the fourier layer."""
    worst = 0.0
    for eps in DEFAULT_SWEEP:
        sol, _ = cache.annulus_solution(eps)
        sup_gap, int_gap = talenti_check(sol)
        worst = max(worst, abs(sup_gap), abs(int_gap))
    art = cache.artifact("fourier_noncircle")
    recs = art.successful_records()
    eps = np.array([r["eps"] for r in recs])
    gaps = np.array([min(r["talenti_int_gap"]) / r["eps"] ** 2 for r in recs])
    floor_ok = bool(np.all(gaps >= 0.01))
    trend_ok = gaps[np.argmin(eps)] >= 0.5 * gaps[np.argmax(eps)]
    ok = worst <= 1e-6 and floor_ok and trend_ok
    return CriterionResult(2, "Talenti equality case & quantitative gap", ok,
                           f"annulus max gap={_fmt_e(worst)} (tol 1e-06), "
                           f"fourier min int_gap/eps^2={_fmt_e(float(gaps.min()))} (>=0.01), "
                           f"trend_ok={trend_ok}")


def criterion_3_equilibrium_residuals(cache: SuiteCache) -> CriterionResult:
    """Relative-equilibrium residuals for the rotating segment and concentric circles."""
    seg = cache.artifact("rotating_segment")
    vec = max(v for v in seg.residuals["vector_residual"] if v is not None)
    worst_circ = 0.0
    art = cache.artifact("concentric_two_circles")
    worst_circ = max(worst_circ, max(art.residuals["br1"]), max(art.residuals["br2"]))
    spec = load_bundled("concentric_two_circles")
    config = build_configuration(spec)
    rotating = SheetConfiguration(config.components, omega=-1.0)
    res = stationarity_residual(rotating, n_res=256, n_quad=2048)
    worst_circ = max(worst_circ, res.max_br1, res.max_br2)
    ok = vec <= 1e-3 and worst_circ <= 1e-6
    return CriterionResult(3, "relative-equilibrium residuals", ok,
                           f"segment max|BR - Omega z^perp|={_fmt_e(vec)} (tol 1e-03), "
                           f"concentric circles (Omega in {{0,-1}}) residuals="
                           f"{_fmt_e(worst_circ)} (tol 1e-06)")


def criterion_4_vanishing_first_variation(cache: SuiteCache) -> CriterionResult:
    """|I~| exactly cancels on the single circle; |I| decays for the segment."""
    art = cache.artifact("concentric_one_circle")
    recs = art.successful_records()
    worst = max(abs(r["I_tilde"]) for r in recs)
    seg = cache.artifact("rotating_segment")
    pairs = [(r["eps"], abs(r["I_eps"])) for r in seg.successful_records()]
    exponent, r2 = fit_rate(pairs, log_correction=True)
    ok = worst <= 1e-5 and len(pairs) >= 4 and exponent >= 0.4
    return CriterionResult(4, "vanishing first variation for equilibria", ok,
                           f"single circle max|I~|={_fmt_e(worst)} (tol 1e-05), "
                           f"segment |I| exponent={exponent:.3f} (>=0.4, R^2={r2:.3f})")


def criterion_5_obstruction_floors(cache: SuiteCache) -> CriterionResult:
    """Epsilon-stable positive floors for the three non-equilibrium scenarios."""
    msgs, ok = [], True

    art = cache.artifact("fourier_noncircle")
    recs = art.successful_records()
    bound = recs[0]["case2_bound"][0]
    floor = min(r["I_tilde"] for r in recs)
    ok &= floor >= 0.5 * bound
    msgs.append(f"fourier I~ floor={_fmt_e(floor)} vs 0.5*bound={_fmt_e(0.5 * bound)}")

    art = cache.artifact("nonconstant_gamma_circle")
    recs = art.successful_records()
    cs = recs[0]["cs_gap"][0]
    cs_exact = 1.0 / np.sqrt(1.0 - 0.25) - 1.0
    ok &= abs(cs - cs_exact) <= 1e-3
    config = build_configuration(art.spec)
    L = config.curve(0).length
    int_g, int_ginv = 1.0, 1.0 + cs
    bound = (L**2 / (4 * np.pi)) * (int_g / int_ginv) * cs
    floor = min(r["I_tilde"] for r in recs)
    ok &= floor >= 0.5 * bound
    msgs.append(f"nonconstant-gamma cs_gap={cs:.6f} (exact {cs_exact:.6f}), "
                f"I~ floor={_fmt_e(floor)} vs 0.5*bound={_fmt_e(0.5 * bound)}")

    art = cache.artifact("two_far_circles")
    floor = min(r["I_tilde"] for r in art.successful_records())
    ok &= floor >= 0.5 * np.pi
    msgs.append(f"two-far I~ floor={_fmt_e(floor)} vs {_fmt_e(0.5 * np.pi)}")
    return CriterionResult(5, "obstruction floors", bool(ok), "; ".join(msgs))


def criterion_6_offcenter_exact(cache: SuiteCache) -> CriterionResult:
    """I^eps of the rotating off-center circle against the exact formula."""
    art = cache.artifact("offcenter_circle_rotating")
    worst_rel = 0.0
    for r in art.successful_records():
        eps = r["eps"]
        exact = 0.5 * 0.09 * (TWO_PI + np.pi * eps)
        worst_rel = max(worst_rel, abs(r["I_eps"] - exact) / exact)
    ok = worst_rel <= 0.02
    return CriterionResult(6, "rotating off-center circle exact value", ok,
                           f"max relative error={_fmt_e(worst_rel)} (tol 2e-02)")


def criterion_7_linearity(cache: SuiteCache) -> CriterionResult:
    """Defect decay on the circle layer and the g endpoint identities."""
    art = cache.artifact("concentric_one_circle")
    pairs = [(r["eps"], r["defect_linearity"]) for r in art.successful_records()]
    exponent, r2 = fit_rate(pairs)

    spec = load_bundled("concentric_one_circle")
    config = build_configuration(spec)
    alphas = np.linspace(0.0, 1.0, 33)[:-1]
    from .layer import g_field
    g = g_field(config, 0, alphas, np.array([0.0, -1.0]))
    v_plus, v_minus = one_sided_velocities(config, 0, alphas)
    gap = max(float(np.max(np.linalg.norm(g[:, 0] - v_plus, axis=-1))),
              float(np.max(np.linalg.norm(g[:, 1] - v_minus, axis=-1))))
    ok = exponent >= 0.8 and gap <= 1e-4
    return CriterionResult(7, "layer-velocity linearity", ok,
                           f"defect exponent={exponent:.3f} (>=0.8, R^2={r2:.3f}), "
                           f"g endpoint identity gap={_fmt_e(gap)} (tol 1e-04)")


def criterion_8_certificates(cache: SuiteCache) -> CriterionResult:
    """All bundled certificates pass at the proof constant; eps = 10 fails."""
    ok = True
    worst_margin = np.inf
    for name in bundled_scenario_names():
        art = cache.artifact(name)
        for r in art.records:
            for c in r.get("certificates", []):
                ok &= c["passed"] and c["worst_pair_ratio"] >= c["c0"]
                worst_margin = min(worst_margin, c["worst_pair_ratio"] - c["c0"])
    big = injectivity_certificate(make_circle((0, 0), 1.0), ConstantStrength(1.0), 10.0)
    ok &= not big.passed
    return CriterionResult(8, "injectivity certificates", bool(ok),
                           f"min (ratio - c0) over suite={_fmt_e(worst_margin)}, "
                           f"eps=10 circle fails={not big.passed}")


def criterion_9_area_formula(cache: SuiteCache) -> CriterionResult:
    """| |D|/eps - L int gamma | against the curvature-controlled bound."""
    worst_excess = -np.inf
    ok = True
    for name in bundled_scenario_names():
        art = cache.artifact(name)
        config = build_configuration(art.spec)
        for r in art.successful_records():
            eps = r["eps"]
            for i, (curve, strength) in enumerate(config.components):
                from .geometry import curve_quadrature, sample_alphas
                aa, ww = curve_quadrature(curve, 4096)
                int_g = float(np.sum(strength.value(aa) * ww))
                g_max = float(np.max(strength.value(sample_alphas(curve, 2048))))
                k_max = float(np.max(np.abs(curve.curvature(sample_alphas(curve, 2048)))))
                L = curve.length
                lhs = abs(r["areas"][i] / eps - L * int_g)
                rhs = 3.0 * eps * L * g_max**2 * k_max + 1e-10
                ok &= lhs <= rhs
                worst_excess = max(worst_excess, lhs - rhs)
    return CriterionResult(9, "layer area formula", bool(ok),
                           f"max (|D|/eps - L int gamma) excess over bound="
                           f"{_fmt_e(worst_excess)} (must be <= 0; +1e-10 roundoff slack)")


def criterion_10_decomposition(cache: SuiteCache) -> CriterionResult:
    """I~ >= sum A + sum B - 1e-6 and exact Omega bookkeeping on every run."""
    worst_gap = np.inf
    worst_book = 0.0
    ok = True
    for name in bundled_scenario_names():
        art = cache.artifact(name)
        for r in art.successful_records():
            lower = sum(r["A"]) + sum(r["B"].values())
            worst_gap = min(worst_gap, r["I_tilde"] - lower)
            omega = art.spec.omega
            book = abs(r["I_eps"] - (r["I_tilde"] + (-omega) * r["J_eps"]))
            worst_book = max(worst_book, book)
            ok &= r["I_tilde"] >= lower - 1e-6 and book <= 1e-8
    return CriterionResult(10, "decomposition consistency", bool(ok),
                           f"min(I~ - sum A - sum B)={_fmt_e(worst_gap)} (>= -1e-06), "
                           f"max Omega-bookkeeping gap={_fmt_e(worst_book)} (tol 1e-08)")


CRITERIA = [
    criterion_1_annulus_poisson,
    criterion_2_talenti,
    criterion_3_equilibrium_residuals,
    criterion_4_vanishing_first_variation,
    criterion_5_obstruction_floors,
    criterion_6_offcenter_exact,
    criterion_7_linearity,
    criterion_8_certificates,
    criterion_9_area_formula,
    criterion_10_decomposition,
]


def run_acceptance(cache: SuiteCache | None = None, verbose: bool = True):
    """Evaluate every criterion; returns the list of CriterionResult."""
    cache = cache or SuiteCache()
    results = []
    for fn in CRITERIA:
        res = fn(cache)
        results.append(res)
        if verbose:
            print(res.line(), flush=True)
    return results
