"""First-variation functional of the layered configuration and its positivity split.

I^eps integrates eps^{-1} (x + grad p) . grad(psi - (Omega/2)|x|^2) over the
layers, where psi is the stream potential of the layer vorticity.  Two exact
identities reduce it to solver output:

  * the x . grad psi part symmetrizes to |D|^2 / (4 pi eps^2);
  * the grad p . grad psi part integrates by parts against Delta psi = omega
    and the boundary data of p, leaving -eps^{-2} (int p + sum_i c_i
    sum_{j nested in i} |D_j|).

Assembling I from these identities (rather than quadraturing the induced
velocity field) keeps the near-equality cases - annuli, concentric circles -
accurate to solver precision, which the acceptance tolerances require; the
direct velocity quadrature is retained as a cross-check diagnostic.

The positivity side splits I-tilde into per-curve Talenti deficits A_i and
pairwise non-nesting products B_ij, both nonnegative, with equality exactly
in the nested-concentric-circle configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .birkhoff_rott import SheetConfiguration, stationarity_residual
from .geometry import enclosed_area, point_in_closed_curve, curve_quadrature, perp, sample_alphas
from .layer import LayerGrid, layer_area

FOUR_PI = 4.0 * np.pi


def nesting_matrix(config: SheetConfiguration, n_probe: int = 8) -> np.ndarray:
    """prec[i, j] is True when curve j lies inside closed curve i (j != i)."""
    n = len(config)
    prec = np.zeros((n, n), dtype=bool)
    for i in config.closed_indices:
        ci = config.curve(i)
        for j in range(n):
            if j == i:
                continue
            pts = config.curve(j).position(sample_alphas(config.curve(j), n_probe))
            inside = point_in_closed_curve(ci, pts)
            prec[i, j] = np.count_nonzero(inside) > n_probe // 2
    return prec


@dataclass(frozen=True)
class FunctionalReport:
    """All section-level scalars of one epsilon: the I integrals, the positivity
    decomposition, and the per-curve shape gaps."""

    epsilon: float
    I_eps: float
    I_tilde: float
    J_eps: float
    A: tuple
    B: dict
    prec: tuple
    areas: tuple
    int_p: tuple
    c_eps: tuple
    cs_gap: tuple
    iso_gap: tuple
    case2_bound: tuple
    talenti_sup_gap: tuple
    talenti_int_gap: tuple

    def sum_A(self):
        return float(sum(self.A))

    def sum_B(self):
        return float(sum(self.B.values()))


def _quad_int_p(solution) -> float:
    return solution.integral_p()


def compute_I(config: SheetConfiguration, layers, solutions):
    """(I_eps, I_tilde, J_eps) assembled from areas, p integrals, and fluxes.

    I_eps = I_tilde + (-Omega) J_eps holds exactly by construction; J_eps is
    the tensor quadrature of eps^{-1} (|x|^2 + grad p . x).
    """
    eps = layers[0].epsilon
    areas = np.array([layer_area(l) for l in layers])
    prec = nesting_matrix(config)
    int_p = np.array([_quad_int_p(s) for s in solutions])

    i1 = float(areas.sum()) ** 2 / (FOUR_PI * eps**2)
    nested = 0.0
    for i in config.closed_indices:
        c_i = solutions[i].c_eps
        inner = float(areas[prec[i]].sum())
        nested += c_i * inner
    i2 = -(nested + float(int_p.sum())) / eps**2
    i_tilde = i1 + i2

    j_eps = 0.0
    for layer, sol in zip(layers, solutions):
        r2 = np.sum(layer.positions**2, axis=-1)
        gp_x = np.sum(sol.gradient * layer.positions, axis=-1)
        j_eps += float(np.sum((r2 + gp_x) * layer.jacobian * layer.quad_weights())) / eps

    i_eps = i_tilde - config.omega * j_eps
    return float(i_eps), float(i_tilde), float(j_eps)


def positivity_decomposition(config: SheetConfiguration, layers, solutions) -> FunctionalReport:
    """Per-curve deficits A_i, pairwise terms B_ij, and the shape-gap scalars.

    A_i = eps^{-2} (|D_i|^2 / 4 pi - int p_i) and, for unordered pairs,
    B_ij = eps^{-2} (1 - [i nested in j] - [j nested in i]) |D_i||D_j| / 4 pi.
    I_tilde dominates sum A + sum B up to the sup-bound slack on each c_i.
    """
    from .elliptic import talenti_check

    eps = layers[0].epsilon
    areas = tuple(layer_area(l) for l in layers)
    int_p = tuple(_quad_int_p(s) for s in solutions)
    prec = nesting_matrix(config)

    a_vals = tuple((areas[i] ** 2 / FOUR_PI - int_p[i]) / eps**2 for i in range(len(layers)))
    b_vals = {}
    for i in range(len(layers)):
        for j in range(i + 1, len(layers)):
            indicator = 1.0 - float(prec[i, j]) - float(prec[j, i])
            b_vals[(i, j)] = indicator * areas[i] * areas[j] / (FOUR_PI * eps**2)

    cs, iso, case2 = [], [], []
    for i, (curve, strength) in enumerate(config.components):
        if not curve.closed:
            cs.append(None)
            iso.append(None)
            case2.append(None)
            continue
        aq, wq = curve_quadrature(curve, 2048)
        g = strength.value(aq)
        int_g = float(np.sum(g * wq))
        int_ginv = float(np.sum(wq / g))
        area_u = enclosed_area(curve)
        L = curve.length
        cs.append(int_g * int_ginv - 1.0)
        iso.append(1.0 - FOUR_PI * area_u / L**2)
        case2.append((L**2 / FOUR_PI) * (int_g / int_ginv)
                     * (int_g * int_ginv - FOUR_PI * area_u / L**2))

    gaps = [talenti_check(s) for s in solutions]
    i_eps, i_tilde, j_eps = compute_I(config, layers, solutions)
    return FunctionalReport(
        epsilon=float(eps), I_eps=i_eps, I_tilde=i_tilde, J_eps=j_eps,
        A=a_vals, B=b_vals, prec=tuple(map(tuple, prec.tolist())),
        areas=areas, int_p=int_p,
        c_eps=tuple(s.c_eps for s in solutions),
        cs_gap=tuple(cs), iso_gap=tuple(iso), case2_bound=tuple(case2),
        talenti_sup_gap=tuple(g[0] for g in gaps),
        talenti_int_gap=tuple(g[1] for g in gaps))


def first_variation_direct(config: SheetConfiguration, layers, solutions, v_grids):
    """Direct tensor quadrature of eps^{-1} (x + grad p) . (-(v^eps)^perp - Omega x).

    The velocity-field route carries the quadrature error of v^eps; it is a
    cross-check of the assembled compute_I, not the authoritative value.
    """
    eps = layers[0].epsilon
    i_tilde = 0.0
    j_eps = 0.0
    for layer, sol, v in zip(layers, solutions, v_grids):
        u = layer.positions + sol.gradient
        w = layer.jacobian * layer.quad_weights() / eps
        i_tilde += float(np.sum(np.sum(u * (-perp(v)), axis=-1) * w))
        r2 = np.sum(layer.positions**2, axis=-1)
        gp_x = np.sum(sol.gradient * layer.positions, axis=-1)
        j_eps += float(np.sum((r2 + gp_x) * layer.jacobian * layer.quad_weights())) / eps
    return i_tilde - config.omega * j_eps, i_tilde, j_eps


def i1_direct_lattice(layers):
    """Directly-quadratured I_1 on the cell-center lattice, with the diagonal block.

    Returns (direct value, area-formula value).  The swap symmetry makes the
    off-diagonal double sum equal (sum m)^2/4pi - sum m^2/4pi exactly; the
    diagonal blocks contribute the sum m^2/4pi back.
    """
    from .layer import grid_positions, metric_columns

    eps = layers[0].epsilon
    pts, masses = [], []
    for layer in layers:
        a, e = layer.alpha, layer.eta
        if layer.curve.closed:
            ac = a + 0.5 / layer.n_alpha
            wa = np.full(layer.n_alpha, 1.0 / layer.n_alpha)
        else:
            ac = 0.5 * (a[:-1] + a[1:])
            wa = np.diff(a)
        ec = 0.5 * (e[:-1] + e[1:])
        we = np.full(len(ec), 1.0 / layer.n_eta)
        _, _, jac = metric_columns(layer.curve, layer.strength, eps, ac, ec)
        pts.append(grid_positions(layer.curve, layer.strength, eps, ac, ec).reshape(-1, 2))
        masses.append((jac * wa[:, None] * we[None, :]).reshape(-1) / eps)
    x = np.concatenate(pts)
    m = np.concatenate(masses)

    total = 0.0
    for i0 in range(0, len(x), 512):
        xi = x[i0:i0 + 512]
        mi = m[i0:i0 + 512]
        d = xi[:, None, :] - x[None, :, :]
        r2 = np.sum(d * d, axis=-1)
        live = r2 > 0
        dot = np.sum(xi[:, None, :] * d, axis=-1)
        total += float(np.sum(np.where(live, dot / np.where(live, r2, 1.0), 0.0)
                              * mi[:, None] * m[None, :]))
    direct = total / (2.0 * np.pi) + float(np.sum(m**2)) / FOUR_PI
    formula = float(np.sum(m)) ** 2 / FOUR_PI
    return direct, formula


# verdicts ---------------------------------------------------------------------

EQUILIBRIUM_CONSISTENT = "EQUILIBRIUM_CONSISTENT"
OBSTRUCTED = "OBSTRUCTED"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class VerdictReport:
    verdict: str
    reason: str
    floor: float
    fitted_exponent: float
    spearman: float
    residual_ok: bool
    eps: tuple = field(default=())
    values: tuple = field(default=())

    def to_dict(self):
        return {"verdict": self.verdict, "reason": self.reason, "floor": self.floor,
                "fitted_exponent": self.fitted_exponent, "spearman": self.spearman,
                "residual_ok": self.residual_ok, "eps": list(self.eps),
                "values": list(self.values)}


def rigidity_verdict(reports, config: SheetConfiguration, residuals=None,
                     floor_tol: float = 1e-3, residual_tol_closed: float = 1e-6,
                     residual_tol_open: float = 1e-3) -> VerdictReport:
    """Classify a sweep: decaying |I| with small residuals means a consistent
    equilibrium; an epsilon-stable positive floor of the Omega <= 0 functional
    means the configuration is obstructed.
    """
    from .harness import fit_rate

    if len(reports) < 3:
        raise ValueError("rigidity_verdict needs at least 3 epsilon values")
    reports = sorted(reports, key=lambda r: -r.epsilon)
    eps = np.array([r.epsilon for r in reports])
    vals_eq = np.array([abs(r.I_eps) for r in reports])
    vals_floor = np.array([r.I_tilde if config.omega == 0 else r.I_eps for r in reports])

    if residuals is None:
        residuals = stationarity_residual(config)
    res_ok = True
    for i, (curve, _) in enumerate(config.components):
        tol = residual_tol_closed if curve.closed else residual_tol_open
        worst = max(residuals.br1[i], residuals.br2[i])
        if residuals.vector_residual[i] is not None:
            worst = max(worst, residuals.vector_residual[i])
        res_ok = res_ok and worst <= tol

    exponent, _ = fit_rate(list(zip(eps, np.maximum(vals_eq, 1e-300))), log_correction=True)
    decayed = bool(np.max(vals_eq) <= floor_tol or exponent >= 0.25)
    if res_ok and decayed:
        return VerdictReport(EQUILIBRIUM_CONSISTENT,
                             "residuals small and |I^eps| vanishes with epsilon",
                             float(np.min(vals_floor)), float(exponent), 0.0, True,
                             tuple(eps), tuple(vals_floor))

    floor = float(np.min(vals_floor))
    rho = float(stats.spearmanr(vals_floor, eps).statistic) if len(set(vals_floor)) > 1 else 0.0
    # "no decreasing trend": either anticorrelated with eps or the smallest-eps
    # value retains at least half of the largest-eps value
    trend_ok = rho <= 0.0 or vals_floor[-1] >= 0.5 * vals_floor[0]
    if config.omega <= 0 and floor > floor_tol and trend_ok:
        return VerdictReport(OBSTRUCTED,
                             "functional has an epsilon-stable positive floor",
                             floor, float(exponent), rho, res_ok,
                             tuple(eps), tuple(vals_floor))
    return VerdictReport(INCONCLUSIVE, "neither decay nor a stable floor detected",
                         floor, float(exponent), rho, res_ok,
                         tuple(eps), tuple(vals_floor))
