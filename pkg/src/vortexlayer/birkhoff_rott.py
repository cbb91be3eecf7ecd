"""Birkhoff-Rott velocities and stationarity residuals of vortex sheets.

The sheet-induced velocity at a sheet point is the principal-value integral
of the kernel K2(x) = x^perp / (2 pi |x|^2) against the strength gamma
(measured per unit arclength, so the density is gamma |z'| d alpha).

Principal-value quadratures:
  * closed curves: trapezoidal rule on nodes offset half a spacing from the
    target, which cancels the odd singularity and converges spectrally for
    smooth periodic data (the alternate-point rule when the target is a
    grid node);
  * open curves: substitute alpha' = (1 - cos theta)/2 to cluster nodes at
    the endpoints, subtract the flat-kernel singularity, and add back its
    principal value in closed form (a log of the endpoint distances).

The one-sided limits differ from the average by +/- (gamma/2) n^perp, and a
configuration is a relative equilibrium at angular velocity Omega when
(BR - Omega z^perp) . n vanishes and (BR - Omega z^perp) . s gamma is
constant per closed curve and zero on open curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    GeometryError,
    ParamCurve,
    curve_quadrature,
    pairwise_distance,
    perp,
    sample_alphas,
)

TWO_PI = 2.0 * np.pi


class QuadratureError(RuntimeError):
    """Successive quadrature refinements disagree beyond tolerance."""

    def __init__(self, message, value_coarse=None, value_fine=None):
        super().__init__(message)
        self.value_coarse = value_coarse
        self.value_fine = value_fine


# strength profiles ----------------------------------------------------------

class StrengthProfile:
    """Vorticity strength gamma(alpha) on one curve, per unit arclength.

    ``regularity`` is ("closed-c2",) for closed-curve profiles or
    ("open-holder", b) with b in (0, 1) for open-curve profiles that vanish
    at the endpoints.
    """

    regularity = ("closed-c2",)

    def value(self, alpha) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, alpha) -> np.ndarray:
        raise NotImplementedError

    @property
    def holder_exponent(self) -> float:
        return 1.0 if self.regularity[0] == "closed-c2" else self.regularity[1]

    def holder_norm_estimate(self, kind: str = "closed", n: int = 512) -> float:
        """Sampled C^b seminorm sup |gamma(a) - gamma(b)| / |a - b|^b."""
        a = np.arange(n) / n if kind == "closed" else np.linspace(0.0, 1.0, n)
        g = self.value(a)
        da = np.abs(a[:, None] - a[None, :])
        if kind == "closed":
            da = np.minimum(da, 1.0 - da)
        dg = np.abs(g[:, None] - g[None, :])
        b = self.holder_exponent
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(da > 0, dg / np.where(da > 0, da, 1.0) ** b, 0.0)
        return float(np.max(q))

    def validate_for(self, curve: ParamCurve) -> None:
        """Check the (H2)-(H3) style constraints against the carrying curve."""
        closed_tag = self.regularity[0] == "closed-c2"
        if curve.closed != closed_tag:
            raise GeometryError(
                f"strength regularity {self.regularity[0]!r} is inconsistent with a "
                f"{curve.kind} curve")
        a = sample_alphas(curve, 512)
        g = self.value(a)
        if not np.all(np.isfinite(g)):
            raise GeometryError("strength takes non-finite values")
        if curve.closed:
            if g.min() <= 0:
                raise GeometryError("closed-curve strength must be strictly positive")
        else:
            ends = self.value(np.array([0.0, 1.0]))
            if np.max(np.abs(ends)) > 1e-12:
                raise GeometryError("open-curve strength must vanish at the endpoints")
            interior = self.value(np.linspace(1e-4, 1 - 1e-4, 257))
            if interior.min() <= 0:
                raise GeometryError("open-curve strength must be positive in the interior")


class ConstantStrength(StrengthProfile):
    regularity = ("closed-c2",)

    def __init__(self, value: float):
        self._v = float(value)

    def value(self, alpha):
        return np.full(np.shape(np.asarray(alpha)), self._v)

    def derivative(self, alpha):
        return np.zeros(np.shape(np.asarray(alpha)))


class FourierStrength(StrengthProfile):
    """gamma(alpha) = mean + sum_k a_k cos(2 pi k alpha); closed curves only."""

    regularity = ("closed-c2",)

    def __init__(self, mean: float, cos_modes):
        self.mean = float(mean)
        self.cos_modes = [(int(k), float(a)) for k, a in cos_modes]

    def value(self, alpha):
        a = np.asarray(alpha, dtype=float)
        g = np.full(a.shape, self.mean)
        for k, c in self.cos_modes:
            g = g + c * np.cos(TWO_PI * k * a)
        return g

    def derivative(self, alpha):
        a = np.asarray(alpha, dtype=float)
        g = np.zeros(a.shape)
        for k, c in self.cos_modes:
            g = g - c * TWO_PI * k * np.sin(TWO_PI * k * a)
        return g


class SemicircleStrength(StrengthProfile):
    """The rotating-segment equilibrium law gamma = 2 Omega sqrt(a^2 - x^2).

    With this density the segment of half-length a satisfies BR = Omega
    z^perp exactly (the finite Hilbert transform of sqrt(a^2 - t^2) is
    pi x, so the half-density Omega sqrt(a^2 - x^2) would rotate at Omega/2).
    Holder-1/2 up to the endpoints; the derivative blows up there and is
    reported as 0 at alpha in {0, 1} (those values only ever multiply a
    vanishing jacobian).
    """

    def __init__(self, omega: float, half_length: float):
        self.omega = float(omega)
        self.half_length = float(half_length)
        self.regularity = ("open-holder", 0.5)
        if omega <= 0:
            raise GeometryError("semicircle strength needs Omega > 0 for positivity")

    def value(self, alpha):
        a = np.asarray(alpha, dtype=float)
        return 4.0 * self.omega * self.half_length * np.sqrt(np.maximum(a * (1.0 - a), 0.0))

    def derivative(self, alpha):
        a = np.asarray(alpha, dtype=float)
        prod = a * (1.0 - a)
        safe = prod > 1e-14
        with np.errstate(divide="ignore", invalid="ignore"):
            d = 2.0 * self.omega * self.half_length * (1.0 - 2.0 * a) / np.sqrt(np.where(safe, prod, 1.0))
        return np.where(safe, d, 0.0)


# configurations -------------------------------------------------------------

@dataclass(frozen=True)
class SheetConfiguration:
    """A finite disjoint union of (curve, strength) pairs plus angular velocity.

    Closed curves must be listed before open ones.  Disjointness and the
    curve-kind/regularity consistency are validated at construction.
    """

    components: tuple
    omega: float = 0.0
    d_gamma: float = field(default=0.0, compare=False)

    def __init__(self, components, omega=0.0):
        comps = tuple((c, s) for c, s in components)
        if not comps:
            raise GeometryError("configuration needs at least one component")
        seen_open = False
        for c, s in comps:
            if c.closed and seen_open:
                raise GeometryError("closed curves must be listed before open curves")
            seen_open = seen_open or not c.closed
            s.validate_for(c)
        d = np.inf
        if len(comps) > 1:
            d = pairwise_distance([c for c, _ in comps])
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "omega", float(omega))
        object.__setattr__(self, "d_gamma", float(d))

    def __len__(self):
        return len(self.components)

    def curve(self, i) -> ParamCurve:
        return self.components[i][0]

    def strength(self, i) -> StrengthProfile:
        return self.components[i][1]

    @property
    def closed_indices(self):
        return [i for i, (c, _) in enumerate(self.components) if c.closed]

    @property
    def open_indices(self):
        return [i for i, (c, _) in enumerate(self.components) if not c.closed]


# kernel and quadratures ------------------------------------------------------

def kernel_K2(x) -> np.ndarray:
    """Biot-Savart kernel x^perp / (2 pi |x|^2) on (..., 2) arrays."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0.0):
        raise ValueError("kernel_K2 is singular at x = 0")
    return perp(x) / (TWO_PI * r2[..., None])


def _k2_pairs(x, y):
    """K2(x_t - y_s) for target rows and source columns, zero on coincidences."""
    d = x[:, None, :] - y[None, :, :]
    r2 = np.sum(d * d, axis=-1)
    safe = r2 > 0
    out = perp(d) / (TWO_PI * np.where(safe, r2, 1.0)[..., None])
    return np.where(safe[..., None], out, 0.0)


def _self_term_closed(curve, strength, alphas, n_quad):
    a = np.asarray(alphas, dtype=float)
    zt = curve.position(a)
    scaled = a * n_quad
    aligned = np.max(np.abs(scaled - np.round(scaled))) < 1e-9
    if aligned:
        # targets on the uniform grid all share the one half-offset source
        # grid (the alternate-point rule); curve data is evaluated once
        src = (np.arange(n_quad) + 0.5) / n_quad
        zs = curve.position(src)
        gs = strength.value(src)
        d = zt[:, None, :] - zs[None, :, :]
        gsb = gs[None, :, None]
    else:
        offs = (np.arange(n_quad) + 0.5) / n_quad
        src = a[:, None] + offs[None, :]
        zs = curve.position(src)
        gs = strength.value(src)
        d = zt[:, None, :] - zs
        gsb = gs[..., None]
    r2 = np.sum(d * d, axis=-1)
    k2 = perp(d) / (TWO_PI * r2[..., None])
    return np.sum(k2 * gsb, axis=1) * curve.length / n_quad


def _self_term_open(curve, strength, alphas, n_quad):
    a = np.asarray(alphas, dtype=float)
    theta = (np.arange(n_quad) + 0.5) * np.pi / n_quad
    src = 0.5 * (1.0 - np.cos(theta))
    w = 0.5 * np.sin(theta) * np.pi / n_quad

    L = curve.length
    zt = curve.position(a)
    z1 = curve.derivative(a, 1)
    gt = strength.value(a)
    zs = curve.position(src)
    gs = strength.value(src)

    d = zt[:, None, :] - zs[None, :, :]
    r2 = np.sum(d * d, axis=-1)
    delta = a[:, None] - src[None, :]
    near = np.abs(delta) < 1e-10

    with np.errstate(divide="ignore", invalid="ignore"):
        k2_full = perp(d) / (TWO_PI * np.where(near, 1.0, r2)[..., None])
        flat = perp(z1)[:, None, :] / (TWO_PI * L**2 * np.where(near, 1.0, delta)[..., None])
    integrand = k2_full * gs[None, :, None] - flat * gt[:, None, None]

    if np.any(near):
        # removable 0/0: limit of the subtracted integrand at alpha' -> alpha
        g1 = strength.derivative(a)
        z2 = curve.derivative(a, 2)
        lim = (-g1[:, None] * perp(z1) - 0.5 * gt[:, None] * perp(z2)) / (TWO_PI * L**2)
        integrand = np.where(near[..., None], lim[:, None, :], integrand)

    pv = np.log(a / (1.0 - a))
    n_t = perp(z1) / L
    return (L * np.sum(integrand * w[None, :, None], axis=1)
            + gt[:, None] * n_t * pv[:, None] / TWO_PI)


def _cross_term(curve, strength, x_targets, n_quad):
    src, w = curve_quadrature(curve, n_quad)
    zs = curve.position(src)
    gs = strength.value(src)
    k2 = _k2_pairs(np.atleast_2d(x_targets), zs)
    return np.sum(k2 * (gs * w)[None, :, None], axis=1) * curve.length


def evaluate_BR(config: SheetConfiguration, i: int, alphas, n_quad: int = 2048,
                check: bool = False, check_tol: float | None = None) -> np.ndarray:
    """Birkhoff-Rott velocity at z_i(alpha); principal value on the self term.

    With ``check=True`` the evaluation is repeated at doubled node count and a
    QuadratureError carrying both values is raised if they disagree beyond
    ``check_tol`` (defaults: 1e-6 closed, 1e-4 open).
    """
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    curve = config.curve(i)
    if curve.closed:
        total = _self_term_closed(curve, config.strength(i), a, n_quad)
    else:
        total = _self_term_open(curve, config.strength(i), a, n_quad)
    x = curve.position(a)
    for k, (ck, sk) in enumerate(config.components):
        if k != i:
            total = total + _cross_term(ck, sk, x, n_quad)
    if check:
        tol = check_tol if check_tol is not None else (1e-6 if curve.closed else 1e-4)
        fine = evaluate_BR(config, i, a, n_quad=2 * n_quad, check=False)
        gap = float(np.max(np.linalg.norm(fine - total, axis=-1)))
        if gap > tol:
            raise QuadratureError(
                f"Birkhoff-Rott quadrature not converged on curve {i}: "
                f"refinement changed the value by {gap:.3e} (tol {tol:.1e})",
                value_coarse=total, value_fine=fine)
        total = fine
    return total


def one_sided_velocities(config: SheetConfiguration, i: int, alphas,
                         n_quad: int = 2048):
    """One-sided limits v+ (the side n points into) and v- on curve i.

    v_pm = BR +/- (gamma/2) n^perp; the jump v- - v+ equals gamma s.
    """
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    br = evaluate_BR(config, i, a, n_quad=n_quad)
    curve = config.curve(i)
    g = config.strength(i).value(a)
    npv = perp(curve.normal(a))
    v_plus = br + 0.5 * g[..., None] * npv
    v_minus = br - 0.5 * g[..., None] * npv
    return v_plus, v_minus


# residual reports ------------------------------------------------------------

@dataclass(frozen=True)
class BRResidualReport:
    """Per-curve relative-equilibrium residuals.

    ``br1`` is max |(BR - Omega z^perp) . n|.  For closed curves ``br2`` is
    the oscillation of (BR - Omega z^perp) . s gamma around its fitted
    constant ``c_i``; for open curves it is the max of that quantity itself
    and ``vector_residual`` is max |BR - Omega z^perp|.
    """

    br1: tuple
    br2: tuple
    c_i: tuple
    vector_residual: tuple

    @property
    def max_br1(self):
        return max(self.br1)

    @property
    def max_br2(self):
        return max(self.br2)

    def max_vector(self):
        vals = [v for v in self.vector_residual if v is not None]
        return max(vals) if vals else None


def residual_samples(curve: ParamCurve, n_res: int = 256, delta: float = 1e-3):
    """Residual sampling points: uniform (closed) or endpoint-clustered in [delta, 1-delta]."""
    if curve.closed:
        return np.arange(n_res) / n_res
    t0 = np.arccos(1.0 - 2.0 * delta)
    theta = np.linspace(t0, np.pi - t0, n_res)
    return 0.5 * (1.0 - np.cos(theta))


def stationarity_residual(config: SheetConfiguration, n_res: int = 256,
                          n_quad: int = 2048, delta: float = 1e-3) -> BRResidualReport:
    """Sample the two equilibrium equations and report the residual maxima."""
    br1, br2, cs, vec = [], [], [], []
    for i, (curve, strength) in enumerate(config.components):
        a = residual_samples(curve, n_res=n_res, delta=delta)
        w = evaluate_BR(config, i, a, n_quad=n_quad)
        w = w - config.omega * perp(curve.position(a))
        s = curve.tangent(a)
        n = perp(s)
        g = strength.value(a)
        br1.append(float(np.max(np.abs(np.sum(w * n, axis=-1)))))
        t = np.sum(w * s, axis=-1) * g
        if curve.closed:
            c = float(np.mean(t))
            br2.append(float(np.max(np.abs(t - c))))
            cs.append(c)
            vec.append(None)
        else:
            br2.append(float(np.max(np.abs(t))))
            cs.append(None)
            vec.append(float(np.max(np.linalg.norm(w, axis=-1))))
    return BRResidualReport(br1=tuple(br1), br2=tuple(br2), c_i=tuple(cs),
                            vector_residual=tuple(vec))


def _circle_data(curve: ParamCurve, strength: StrengthProfile, n: int = 256):
    """(center, radius, gamma) if the component is a constant-strength circle."""
    if not curve.closed:
        raise GeometryError("concentricity residual requires closed curves")
    a = np.arange(n) / n
    z = curve.position(a)
    center = z.mean(axis=0)
    radii = np.linalg.norm(z - center, axis=-1)
    r = float(radii.mean())
    if np.max(np.abs(radii - r)) > 1e-8 * max(r, 1.0):
        raise GeometryError("curve is not a circle (radius varies)")
    g = strength.value(a)
    if np.max(np.abs(g - g.mean())) > 1e-10 * max(abs(g.mean()), 1.0):
        raise GeometryError("strength is not constant on the circle")
    return center, r, float(g.mean())


def concentricity_residual(config: SheetConfiguration, n_res: int = 256) -> np.ndarray:
    """Normal-velocity residual on each circle from the explicit circle fields.

    A constant-strength circle induces zero velocity inside itself and the
    point-vortex field gamma L (x - x0)^perp / (2 pi |x - x0|^2) outside, so
    on a family of circles the normal residual vanishes exactly when nested
    circles share a center.
    """
    data = [_circle_data(c, s) for c, s in config.components]
    out = np.zeros(len(config))
    for k, (ck, rk, _) in enumerate(data):
        a = np.arange(n_res) / n_res
        x = config.curve(k).position(a)
        n = config.curve(k).normal(a)
        total = np.zeros(n_res)
        for i, (ci, ri, gi) in enumerate(data):
            if i == k:
                continue
            if np.linalg.norm(ck - ci) + rk < ri:
                continue  # circle k sits inside circle i: zero interior field
            d = x - ci
            r2 = np.sum(d * d, axis=-1)
            vi = gi * (TWO_PI * ri) * perp(d) / (TWO_PI * r2[:, None])
            total = total + np.sum(vi * n, axis=-1)
        out[k] = np.max(np.abs(total))
    return out
