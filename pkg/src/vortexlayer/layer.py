"""The epsilon-thin vortex layer: mapped grids, certificates, velocities.

Each curve is thickened by the map R(alpha, eta) = z(alpha) + eps gamma(alpha)
n(z(alpha)) eta with eta in [-1, 0]; the layer carries uniform vorticity
1/eps.  Since n points inward on a counter-clockwise closed curve and eta is
negative, the layer sits on the outside and its eta = 0 edge coincides with
the curve.  The jacobian is the closed form eps L gamma - eps^2 L gamma^2
kappa eta and the grid stores the exact metric columns, so the mapped
quadratures downstream have no geometric discretization error.

The induced velocity of a layer is evaluated by contour dynamics: for a
uniform patch, v(x) = -(omega/2 pi) times the circulation-weighted boundary
integral of log|x - y|, which we evaluate with exact straight-panel integrals
on an upsampled boundary polygon.  That stays uniformly accurate for targets
arbitrarily close to (or on) the boundary, which a mapped midpoint rule does
not: the layer cells are extremely anisotropic (width eps/N_eta against
length L/N_alpha), and the near-field lattice error of cell-center sums is
O(1) at thin-layer spacings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .birkhoff_rott import (
    SheetConfiguration,
    StrengthProfile,
    evaluate_BR,
    one_sided_velocities,
)
from .geometry import GeometryError, ParamCurve, arc_chord_constant, open_curve_nodes, perp

TWO_PI = 2.0 * np.pi


class LayerError(ValueError):
    """Layer construction failed (epsilon too large, grid too coarse, ...)."""


class CertificateError(RuntimeError):
    """An injectivity certificate failed; the epsilon is rejected."""


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on n+1 uniform nodes (n even)."""
    if n % 2 != 0:
        raise LayerError(f"Simpson quadrature needs an even interval count, got {n}")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


@dataclass(frozen=True)
class LayerGrid:
    """Tensor grid on S x [-1, 0] with mapped positions, metric, and weights.

    eta runs from -1 (outer edge) to 0 (the curve itself); ``w_alpha`` and
    ``w_eta`` integrate smooth functions of (alpha, eta) over the rectangle.
    ``certified`` is None until an injectivity certificate has been attached.
    """

    curve: ParamCurve
    strength: StrengthProfile
    epsilon: float
    alpha: np.ndarray
    eta: np.ndarray
    positions: np.ndarray
    jacobian: np.ndarray
    d_alpha_R: np.ndarray
    d_eta_R: np.ndarray
    w_alpha: np.ndarray
    w_eta: np.ndarray
    certified: object = None

    @property
    def n_alpha(self) -> int:
        return len(self.alpha)

    @property
    def n_eta(self) -> int:
        return len(self.eta) - 1

    def quad_weights(self) -> np.ndarray:
        return self.w_alpha[:, None] * self.w_eta[None, :]

    def with_certificate(self, certificate) -> "LayerGrid":
        return LayerGrid(curve=self.curve, strength=self.strength, epsilon=self.epsilon,
                         alpha=self.alpha, eta=self.eta, positions=self.positions,
                         jacobian=self.jacobian, d_alpha_R=self.d_alpha_R,
                         d_eta_R=self.d_eta_R, w_alpha=self.w_alpha, w_eta=self.w_eta,
                         certified=certificate)


def layer_map(curve: ParamCurve, strength: StrengthProfile, epsilon: float,
              alpha, eta) -> np.ndarray:
    """R(alpha, eta) for arbitrary broadcastable arguments."""
    a = np.asarray(alpha, dtype=float)
    e = np.asarray(eta, dtype=float)
    z = curve.position(a)
    n = curve.normal(a)
    g = strength.value(a)
    return z + epsilon * (g * e)[..., None] * n


def metric_columns(curve: ParamCurve, strength: StrengthProfile, epsilon: float,
                   alpha, eta):
    """Exact columns (d_alpha R, d_eta R) and jacobian on a tensor grid.

    ``alpha`` (n_a,) and ``eta`` (n_e,) are 1-d; outputs have shape
    (n_a, n_e, ...).  Curve and strength data are evaluated on the 1-d alpha
    line only (the eta dependence is affine), which matters for spectrally
    reparameterized curves.
    """
    a = np.asarray(alpha, dtype=float)
    e = np.asarray(eta, dtype=float)
    L = curve.length
    z1 = curve.derivative(a, 1)
    z2 = curve.derivative(a, 2)
    g = strength.value(a)
    g1 = strength.derivative(a)
    normal_part = (g1[:, None] * perp(z1) + g[:, None] * perp(z2)) / L
    d_alpha = z1[:, None, :] + epsilon * e[None, :, None] * normal_part[:, None, :]
    d_eta = np.broadcast_to((epsilon * g[:, None] * perp(z1) / L)[:, None, :],
                            d_alpha.shape).copy()
    kappa = np.sum(z2 * perp(z1), axis=-1) / L**3
    jac = epsilon * L * g[:, None] - epsilon**2 * L * (g**2 * kappa)[:, None] * e[None, :]
    return d_alpha, d_eta, jac


def grid_positions(curve: ParamCurve, strength: StrengthProfile, epsilon: float,
                   alpha, eta) -> np.ndarray:
    """R on the tensor grid alpha x eta, evaluating the curve on 1-d alpha."""
    a = np.asarray(alpha, dtype=float)
    e = np.asarray(eta, dtype=float)
    z = curve.position(a)
    n = curve.normal(a)
    g = strength.value(a)
    return z[:, None, :] + epsilon * (g[:, None] * e[None, :])[..., None] * n[:, None, :]


def build_layer(curve: ParamCurve, strength: StrengthProfile, epsilon: float,
                n_alpha: int = 512, n_eta: int = 16) -> LayerGrid:
    """Build the mapped tensor grid; rejects epsilon that folds the map."""
    if epsilon <= 0:
        raise LayerError(f"epsilon must be positive, got {epsilon}")
    if n_alpha < 8 or n_eta < 8:
        raise LayerError("grid needs n_alpha, n_eta >= 8")
    if curve.closed:
        alpha = np.arange(n_alpha) / n_alpha
        w_alpha = np.full(n_alpha, 1.0 / n_alpha)
    else:
        alpha, w_alpha = open_curve_nodes(n_alpha)
    eta = -1.0 + np.arange(n_eta + 1) / n_eta
    w_eta = simpson_weights(n_eta, 1.0 / n_eta)

    positions = grid_positions(curve, strength, epsilon, alpha, eta)
    d_alpha, d_eta, jac = metric_columns(curve, strength, epsilon, alpha, eta)

    interior = jac if curve.closed else jac[1:-1]
    if np.min(interior) <= 0:
        raise LayerError(
            f"epsilon = {epsilon} is too large: the layer map folds "
            f"(min jacobian {np.min(interior):.3e})")
    return LayerGrid(curve=curve, strength=strength, epsilon=float(epsilon),
                     alpha=alpha, eta=eta, positions=positions, jacobian=jac,
                     d_alpha_R=d_alpha, d_eta_R=d_eta, w_alpha=w_alpha, w_eta=w_eta)


def layer_area(layer: LayerGrid) -> float:
    """|D^eps| by tensor quadrature of the exact jacobian."""
    return float(np.sum(layer.jacobian * layer.quad_weights()))


# injectivity ----------------------------------------------------------------

@dataclass(frozen=True)
class InjectivityCertificate:
    """Sampled lower bound on |Delta R| / (|Delta alpha| + eps |Delta(gamma eta)|).

    Passes when the worst sampled ratio stays above c0 = min(L/4, 1/(2 F), 1/2);
    eta is sampled in (-2, 2), the extended range the layer-velocity estimates
    rely on.  ``eps0`` is the analytic smallness threshold from the same bound.
    """

    epsilon: float
    c0: float
    eps0: float
    worst_pair_ratio: float
    n_samples: int
    seed: int

    @property
    def passed(self) -> bool:
        return self.worst_pair_ratio >= self.c0


def injectivity_certificate(curve: ParamCurve, strength: StrengthProfile,
                            epsilon: float, n_samples: int = 10000,
                            seed: int = 1815, eta_range: float = 2.0) -> InjectivityCertificate:
    if n_samples < 10000:
        raise LayerError("certificate needs at least 10^4 random pairs")
    rng = np.random.default_rng(seed)
    L = curve.length
    f_gamma = arc_chord_constant(curve, n=2048)
    c0 = min(L / 4.0, 1.0 / (2.0 * f_gamma), 0.5)

    g_sup = float(np.max(np.abs(strength.value(np.linspace(0, 1, 1025)))))
    z_c2 = curve.c2_norm()
    eps0 = min(L / (8.0 * z_c2 * g_sup), L / (64.0 * f_gamma * z_c2 * g_sup))

    def ratios(a, ap, e, ep):
        dR = layer_map(curve, strength, epsilon, ap, ep) - layer_map(curve, strength, epsilon, a, e)
        num = np.linalg.norm(dR, axis=-1)
        da = np.abs(ap - a)
        if curve.closed:
            da = np.minimum(da, 1.0 - da)
        den = da + epsilon * np.abs(strength.value(a) * e - strength.value(ap) * ep)
        ok = den > 1e-14
        return num[ok] / den[ok]

    a = rng.uniform(0.0, 1.0, n_samples)
    ap = rng.uniform(0.0, 1.0, n_samples)
    e = rng.uniform(-eta_range, eta_range, n_samples)
    ep = rng.uniform(-eta_range, eta_range, n_samples)
    worst = float(np.min(ratios(a, ap, e, ep)))

    # structured near-diagonal and same-parameter pairs
    base = rng.uniform(0.0, 1.0, 400)
    for delta in np.geomspace(1e-6, 0.2, 24):
        an = base
        apn = (base + delta) % 1.0 if curve.closed else np.clip(base + delta, 0.0, 1.0)
        en = rng.uniform(-eta_range, eta_range, 400)
        epn = rng.uniform(-eta_range, eta_range, 400)
        r = ratios(an, apn, en, epn)
        if r.size:
            worst = min(worst, float(np.min(r)))
    en = rng.uniform(-eta_range, eta_range, 2000)
    epn = rng.uniform(-eta_range, eta_range, 2000)
    an = rng.uniform(0.0, 1.0, 2000)
    r = ratios(an, an, en, epn)
    if r.size:
        worst = min(worst, float(np.min(r)))

    return InjectivityCertificate(epsilon=float(epsilon), c0=float(c0), eps0=float(eps0),
                                  worst_pair_ratio=worst, n_samples=n_samples, seed=seed)


# layer velocity via contour dynamics -----------------------------------------

def _boundary_polygon(layer: LayerGrid, n_panels: int):
    """Oriented boundary polyline(s) of the layer region, upsampled.

    Returns (starts, ends) of straight panels traversed counter-clockwise
    around the layer (region on the left).
    """
    curve, strength, eps = layer.curve, layer.strength, layer.epsilon
    if curve.closed:
        a = np.arange(n_panels) / n_panels
        outer = layer_map(curve, strength, eps, a, np.full(n_panels, -1.0))
        inner = curve.position(a)
        starts = np.concatenate([outer, inner[::-1]])
        ends = np.concatenate([np.roll(outer, -1, axis=0), np.roll(inner[::-1], -1, axis=0)])
    else:
        a, _ = open_curve_nodes(n_panels)
        bottom = layer_map(curve, strength, eps, a, np.full(a.shape, -1.0))
        top = curve.position(a)
        loop = np.concatenate([bottom, top[::-1]])
        starts = loop
        ends = np.roll(loop, -1, axis=0)
    return starts, ends


def _panel_log_integrals(targets, starts, ends):
    """Sum over straight panels of t_hat * integral of log|x - y| ds.

    Exact per panel:  with xi, zeta the tangential/normal local coordinates
    and F(u) = (u/2) log(u^2 + zeta^2) - u + zeta atan(u / zeta), the panel
    integral is F(S - xi) + F(xi).
    """
    d = ends - starts
    S = np.linalg.norm(d, axis=-1)
    live = S > 1e-300
    t_hat = np.where(live[:, None], d / np.where(live, S, 1.0)[:, None], 0.0)
    n_hat = perp(t_hat)

    rel = targets[:, None, :] - starts[None, :, :]
    xi = np.sum(rel * t_hat[None, :, :], axis=-1)
    zeta = np.sum(rel * n_hat[None, :, :], axis=-1)

    def F(u):
        r2 = u * u + zeta * zeta
        safe = r2 > 0
        main = np.where(safe, 0.5 * u * np.log(np.where(safe, r2, 1.0)) - u, 0.0)
        zl = np.abs(zeta) > 0
        ang = np.where(zl, zeta * np.arctan(u / np.where(zl, zeta, 1.0)), 0.0)
        return main + ang

    val = (F(S[None, :] - xi) + F(xi)) * live[None, :]
    return np.einsum("tp,pk->tk", val, t_hat)


def layer_velocity(layers, x, n_panels: int = 2048, chunk: int = 512) -> np.ndarray:
    """Velocity field of the uniform 1/eps vorticity on the given layers.

    Valid anywhere in the plane, including points inside or on the layers
    (the field is continuous across the boundary).
    """
    if isinstance(layers, LayerGrid):
        layers = [layers]
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    panels = []
    for layer in layers:
        starts, ends = _boundary_polygon(layer, n_panels)
        panels.append((starts, ends, 1.0 / layer.epsilon))
    out = np.zeros_like(pts)
    for starts, ends, omega_bar in panels:
        for i0 in range(0, len(pts), chunk):
            i1 = min(len(pts), i0 + chunk)
            out[i0:i1] -= (omega_bar / TWO_PI) * _panel_log_integrals(pts[i0:i1], starts, ends)
    return out if np.ndim(x) > 1 else out.reshape(np.shape(x))


def velocity_on_grid(layers, layer: LayerGrid, n_panels: int = 2048) -> np.ndarray:
    """v^eps at every node of ``layer`` (shape (n_alpha, n_eta+1, 2))."""
    pts = layer.positions.reshape(-1, 2)
    v = layer_velocity(layers, pts, n_panels=n_panels)
    return v.reshape(layer.positions.shape)


# linear-in-eta comparison field ----------------------------------------------

def g_field(config: SheetConfiguration, i: int, alphas, etas,
            n_quad: int = 2048, br=None):
    """g_i(alpha, eta) = BR(z_i(alpha)) - (eta + 1/2) [v](z_i(alpha)).

    Interpolates linearly between the one-sided limits: g(., 0) = v+ and
    g(., -1) = v-.  ``br`` may carry precomputed BR values at the alphas
    (the field is independent of epsilon, so sweeps reuse it).
    """
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    e = np.atleast_1d(np.asarray(etas, dtype=float))
    if br is None:
        br = evaluate_BR(config, i, a, n_quad=n_quad)
    curve = config.curve(i)
    jump = config.strength(i).value(a)[:, None] * curve.tangent(a)  # v- minus v+
    return br[:, None, :] - (e + 0.5)[None, :, None] * jump[:, None, :]


def defect_alpha_mask(layer: LayerGrid, delta: float = 1e-3) -> np.ndarray:
    a = layer.alpha
    if layer.curve.closed:
        return np.ones(len(a), dtype=bool)
    return (a >= delta) & (a <= 1.0 - delta)


def linearity_defect(layer: LayerGrid, config: SheetConfiguration, i: int,
                     all_layers=None, n_panels: int = 2048, n_quad: int = 2048,
                     delta: float = 1e-3, v_grid=None, g_values=None) -> float:
    """Max over grid nodes of |v^eps(R(alpha, eta)) - g(alpha, eta)|.

    Open curves are compared on alpha in [delta, 1 - delta] only, where the
    strength is bounded away from its endpoint zeros.
    """
    if all_layers is None:
        all_layers = [layer]
    if v_grid is None:
        v_grid = velocity_on_grid(all_layers, layer, n_panels=n_panels)
    mask = defect_alpha_mask(layer, delta)
    g = g_field(config, i, layer.alpha[mask], layer.eta, n_quad=n_quad) \
        if g_values is None else g_values
    diff = np.linalg.norm(v_grid[mask] - g, axis=-1)
    return float(np.max(diff))


def boundary_limit_gap(layer: LayerGrid, config: SheetConfiguration, i: int,
                       n_panels: int = 2048, n_quad: int = 2048,
                       n_samples: int = 64) -> float:
    """Max |v^eps - v+| on the eta = 0 edge (the Lemma-3.5 style convergence)."""
    if layer.curve.closed:
        a = np.arange(n_samples) / n_samples
    else:
        a = np.linspace(0.1, 0.9, n_samples)
    x = layer.curve.position(a)
    v = layer_velocity([layer], x, n_panels=n_panels)
    v_plus, _ = one_sided_velocities(config, i, a, n_quad=n_quad)
    return float(np.max(np.linalg.norm(v - v_plus, axis=-1)))


def min_cross_layer_distance(layer_a: LayerGrid, layer_b: LayerGrid) -> float:
    pa = layer_a.positions.reshape(-1, 2)
    pb = layer_b.positions.reshape(-1, 2)
    d = np.inf
    for i0 in range(0, len(pa), 1024):
        block = np.linalg.norm(pa[i0:i0 + 1024, None, :] - pb[None, :, :], axis=-1)
        d = min(d, float(block.min()))
    return d
