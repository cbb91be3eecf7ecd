"""Constant-speed planar curves and their differential geometry.

Curves come in two kinds: closed (parameter domain R/Z, traversed
counter-clockwise) and open (parameter domain [0, 1]).  Every curve here is
parameterized at constant speed, |z'(alpha)| = L, where L is the arclength.
That normalization is what makes the tubular-layer formulas downstream
(jacobians, metric tensors) exact, so it is enforced to ~1e-10.

Circles and segments carry closed-form derivatives; radially perturbed
("fourier") closed curves are reparameterized to constant speed by inverting
the cumulative arclength of a trigonometric-polynomial shape with Newton
iteration on a spectral interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


class GeometryError(ValueError):
    """Invalid geometric input: bad radius, self-intersection, open-curve misuse."""


def perp(v: np.ndarray) -> np.ndarray:
    """Rotate vectors by +90 degrees: (x, y) -> (-y, x).  Acts on (..., 2)."""
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


def wrap_distance(a, b):
    """Geodesic parameter distance on R/Z."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


@dataclass(frozen=True)
class Frame:
    """Unit tangent/normal frame and signed curvature at curve points.

    The normal is n = s^perp; for a counter-clockwise circle it points inward
    and the curvature is +1/r.
    """

    tangent: np.ndarray
    normal: np.ndarray
    curvature: np.ndarray


class ParamCurve:
    """A planar curve z(alpha) with constant parameter speed |z'| = length.

    Subclasses provide ``position`` and ``derivative`` (orders 1..3) for
    arbitrary alpha arrays.  All instances are immutable after construction.
    """

    kind = "closed"

    def __init__(self, length: float):
        self.length = float(length)

    # subclass interface ---------------------------------------------------
    def position(self, alpha) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, alpha, order: int = 1) -> np.ndarray:
        raise NotImplementedError

    # derived quantities ---------------------------------------------------
    @property
    def closed(self) -> bool:
        return self.kind == "closed"

    def tangent(self, alpha):
        return self.derivative(alpha, 1) / self.length

    def normal(self, alpha):
        return perp(self.tangent(alpha))

    def curvature(self, alpha):
        # constant speed gives z'' = kappa * n * L^2
        z2 = self.derivative(alpha, 2)
        n = self.normal(alpha)
        return np.sum(z2 * n, axis=-1) / self.length**2

    def frame(self, alpha) -> Frame:
        s = self.tangent(alpha)
        return Frame(tangent=s, normal=perp(s), curvature=self.curvature(alpha))

    def constant_speed_residual(self, n: int = 2048) -> float:
        """Max relative deviation of |z'| from the stored length."""
        a = sample_alphas(self, n)
        speed = np.linalg.norm(self.derivative(a, 1), axis=-1)
        return float(np.max(np.abs(speed / self.length - 1.0)))

    def c2_norm(self, n: int = 1024) -> float:
        """Sampled max of |z|, |z'|, |z''| (the C^2 norm used in thresholds)."""
        cache = self.__dict__.setdefault("_prop_cache", {})
        key = ("c2_norm", n)
        if key not in cache:
            a = sample_alphas(self, n)
            vals = [np.max(np.linalg.norm(self.derivative(a, k), axis=-1)) for k in (1, 2)]
            vals.append(np.max(np.linalg.norm(self.position(a), axis=-1)))
            cache[key] = float(max(vals))
        return cache[key]


class Circle(ParamCurve):
    kind = "closed"

    def __init__(self, center, radius: float):
        if not radius > 0:
            raise GeometryError(f"circle radius must be positive, got {radius}")
        super().__init__(TWO_PI * radius)
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.radius = float(radius)

    def position(self, alpha):
        t = TWO_PI * np.asarray(alpha, dtype=float)
        return np.stack([self.center[0] + self.radius * np.cos(t),
                         self.center[1] + self.radius * np.sin(t)], axis=-1)

    def derivative(self, alpha, order=1):
        t = TWO_PI * np.asarray(alpha, dtype=float)
        r = self.radius * TWO_PI**order
        c, s = np.cos(t), np.sin(t)
        if order == 1:
            return np.stack([-r * s, r * c], axis=-1)
        if order == 2:
            return np.stack([-r * c, -r * s], axis=-1)
        if order == 3:
            return np.stack([r * s, -r * c], axis=-1)
        raise ValueError(f"derivative order {order} not supported")


class Segment(ParamCurve):
    """Horizontal segment from (-a, 0) to (a, 0), z(alpha) = (a(2 alpha - 1), 0)."""

    kind = "open"

    def __init__(self, half_length: float):
        if not half_length > 0:
            raise GeometryError(f"segment half-length must be positive, got {half_length}")
        super().__init__(2.0 * half_length)
        self.half_length = float(half_length)

    def position(self, alpha):
        a = np.asarray(alpha, dtype=float)
        return np.stack([self.half_length * (2.0 * a - 1.0), np.zeros_like(a)], axis=-1)

    def derivative(self, alpha, order=1):
        a = np.asarray(alpha, dtype=float)
        out = np.zeros(a.shape + (2,))
        if order == 1:
            out[..., 0] = 2.0 * self.half_length
        elif order not in (2, 3):
            raise ValueError(f"derivative order {order} not supported")
        return out


class FourierCurve(ParamCurve):
    """Closed curve r(theta) = R (1 + sum_k delta_k cos(k theta)), constant-speed.

    The shape w(theta) = r(theta) e(theta) is a trigonometric polynomial, so
    w and its derivatives are evaluated exactly from complex mode
    coefficients.  The constant-speed parameter alpha is obtained by Newton
    inversion of the spectral antiderivative of |w'|.
    """

    kind = "closed"

    _NEWTON_TOL = 1e-14
    _NEWTON_MAXIT = 60

    def __init__(self, base_radius: float, modes, n_fft: int = 4096,
                 arc_chord_cap: float = 100.0):
        if not base_radius > 0:
            raise GeometryError(f"base radius must be positive, got {base_radius}")
        self.base_radius = float(base_radius)
        self.modes = [(int(k), float(d)) for k, d in modes]
        for k, _ in self.modes:
            if k <= 0:
                raise GeometryError(f"mode wavenumber must be positive, got {k}")

        # complex coefficients of W(theta) = r(theta) e^{i theta}
        coeff = {1: complex(self.base_radius)}
        for k, d in self.modes:
            for m in (1 + k, 1 - k):
                coeff[m] = coeff.get(m, 0.0) + 0.5 * self.base_radius * d
        self._ms = np.array(sorted(coeff), dtype=float)
        self._cs = np.array([coeff[int(m)] for m in self._ms], dtype=complex)

        theta = TWO_PI * np.arange(n_fft) / n_fft
        r = self._radial(theta)
        if np.min(r) <= 0:
            raise GeometryError("radial perturbation is too large: r(theta) <= 0")

        # spectral antiderivative of the speed sigma(theta) = |W'(theta)|
        sigma = np.abs(self._w(theta, 1))
        c = np.fft.rfft(sigma) / n_fft
        keep = np.abs(c) > 1e-17 * abs(c[0])
        keep[0] = True
        self._arc_m = np.nonzero(keep)[0][1:].astype(float)
        self._arc_c = c[keep][1:]
        self._mean_speed = float(c[0].real)
        super().__init__(TWO_PI * self._mean_speed)

        # lookup table alpha(theta) for Newton starting values
        theta_tab = np.linspace(0.0, TWO_PI, 4097)
        self._alpha_tab = self._arclength(theta_tab) / self.length
        self._alpha_tab[0], self._alpha_tab[-1] = 0.0, 1.0
        self._theta_tab = theta_tab

        f = arc_chord_constant(self, n=1024, refine=False)
        if f > arc_chord_cap:
            raise GeometryError(
                f"curve is (nearly) self-intersecting: arc-chord constant {f:.3g} "
                f"exceeds cap {arc_chord_cap:.3g}")

    def _radial(self, theta):
        r = np.ones_like(theta)
        for k, d in self.modes:
            r = r + d * np.cos(k * theta)
        return self.base_radius * r

    def _w(self, theta, order=0):
        """Shape curve W(theta) and derivatives as complex numbers."""
        th = np.asarray(theta, dtype=float)
        phase = np.exp(1j * np.multiply.outer(th, self._ms))
        fac = (1j * self._ms) ** order
        return phase @ (self._cs * fac)

    def _arclength(self, theta):
        th = np.asarray(theta, dtype=float)
        s = self._mean_speed * th
        phase = np.exp(1j * np.multiply.outer(th, self._arc_m))
        s = s + 2.0 * np.real((phase - 1.0) @ (self._arc_c / (1j * self._arc_m)))
        return s

    def _theta_of_alpha(self, alpha):
        a = np.asarray(alpha, dtype=float)
        turns = np.floor(a)
        theta = TWO_PI * turns + np.interp(a - turns, self._alpha_tab, self._theta_tab)
        target = self.length * a
        for _ in range(self._NEWTON_MAXIT):
            sigma = np.abs(self._w(theta, 1))
            step = (self._arclength(theta) - target) / sigma
            theta = theta - step
            if np.max(np.abs(step)) < self._NEWTON_TOL:
                break
        return theta

    def position(self, alpha):
        w = self._w(self._theta_of_alpha(alpha), 0)
        return np.stack([w.real, w.imag], axis=-1)

    def derivative(self, alpha, order=1):
        if order not in (1, 2, 3):
            raise ValueError(f"derivative order {order} not supported")
        theta = self._theta_of_alpha(alpha)
        L = self.length
        w1 = self._w(theta, 1)
        sigma = np.abs(w1)
        tp = L / sigma                     # d theta / d alpha
        if order == 1:
            z = w1 * tp
        else:
            w2 = self._w(theta, 2)
            sig1 = np.real(np.conj(w1) * w2) / sigma
            tpp = -(L**2) * sig1 / sigma**3
            if order == 2:
                z = w2 * tp**2 + w1 * tpp
            else:
                w3 = self._w(theta, 3)
                sig2 = (np.abs(w2) ** 2 + np.real(np.conj(w1) * w3)) / sigma - sig1**2 / sigma
                tppp = -(L**3) * (sig2 * sigma - 3.0 * sig1**2) / sigma**5
                z = w3 * tp**3 + 3.0 * w2 * tp * tpp + w1 * tppp
        return np.stack([z.real, z.imag], axis=-1)


# factories ----------------------------------------------------------------

def make_circle(center, radius: float) -> Circle:
    """Counter-clockwise circle; L = 2 pi r, kappa = 1/r."""
    return Circle(center, radius)


def make_segment(half_length: float) -> Segment:
    """Open segment of length 2a on the x-axis."""
    return Segment(half_length)


def make_fourier_curve(base_radius: float, modes) -> FourierCurve:
    """Constant-speed closed curve with radial perturbation modes [(k, delta), ...]."""
    return FourierCurve(base_radius, modes)


# sampling helpers ----------------------------------------------------------

def sample_alphas(curve: ParamCurve, n: int) -> np.ndarray:
    """n representative parameters: uniform on R/Z, inclusive endpoints on [0,1]."""
    if curve.closed:
        return np.arange(n) / n
    return np.linspace(0.0, 1.0, n)


def open_curve_nodes(n: int):
    """Endpoint-clustered nodes alpha_j = (1 - cos(j pi / n)) / 2 with weights.

    The weights integrate smooth functions of alpha over [0, 1]; they are the
    theta-space trapezoidal rule times d alpha / d theta, which converges
    spectrally for integrands that are smooth in theta.
    """
    theta = np.linspace(0.0, np.pi, n + 1)
    alpha = 0.5 * (1.0 - np.cos(theta))
    w = (np.pi / n) * 0.5 * np.sin(theta)
    return alpha, w


def curve_quadrature(curve: ParamCurve, n: int):
    """Nodes and weights for integrating f(alpha) d alpha along the curve."""
    if curve.closed:
        return np.arange(n) / n, np.full(n, 1.0 / n)
    return open_curve_nodes(n)


def integrate_on_curve(curve: ParamCurve, func, n: int = 2048) -> float:
    a, w = curve_quadrature(curve, n)
    return float(np.sum(func(a) * w))


# global geometric certificates ---------------------------------------------

def arc_chord_constant(curve: ParamCurve, n: int = 4096, refine: bool = True) -> float:
    """Supremum of parameter distance over chord distance (sampled).

    Closed curves measure parameter distance geodesically on R/Z.  The value
    is nondecreasing in n for nested dyadic samples; ``refine`` runs a local
    grid polish around the best pair.
    """
    if n < 256:
        raise GeometryError("arc-chord sampling requires at least 256 points")
    cache = curve.__dict__.setdefault("_prop_cache", {})
    key = ("arc_chord", n, refine)
    if key in cache:
        return cache[key]
    alphas = sample_alphas(curve, n)
    z = curve.position(alphas)

    best = 0.0
    best_pair = (0.0, 0.0)
    chunk = max(1, (1 << 22) // n)
    for i0 in range(0, n, chunk):
        i1 = min(n, i0 + chunk)
        da = np.abs(alphas[i0:i1, None] - alphas[None, :])
        if curve.closed:
            da = np.minimum(da, 1.0 - da)
        dz = np.linalg.norm(z[i0:i1, None, :] - z[None, :, :], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dz > 0, da / np.where(dz > 0, dz, 1.0), 0.0)
        k = int(np.argmax(ratio))
        val = float(ratio.flat[k])
        if val > best:
            best = val
            best_pair = (alphas[i0 + k // n], alphas[k % n])
    if not refine:
        cache[key] = best
        return best

    a0, b0 = best_pair
    width = 2.0 / n
    for _ in range(3):
        aa = a0 + np.linspace(-width, width, 17)
        bb = b0 + np.linspace(-width, width, 17)
        if curve.closed:
            aa, bb = aa % 1.0, bb % 1.0
        else:
            aa, bb = np.clip(aa, 0, 1), np.clip(bb, 0, 1)
        da = np.abs(aa[:, None] - bb[None, :])
        if curve.closed:
            da = np.minimum(da, 1.0 - da)
        dz = np.linalg.norm(curve.position(aa)[:, None, :] - curve.position(bb)[None, :, :], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dz > 1e-15, da / np.where(dz > 1e-15, dz, 1.0), 0.0)
        k = int(np.argmax(ratio))
        if ratio.flat[k] > best:
            best = float(ratio.flat[k])
            a0, b0 = aa[k // 17], bb[k % 17]
        width /= 8.0
    cache[key] = best
    return best


def pairwise_distance(curves, n: int = 1024, floor: float = 1e-9) -> float:
    """Minimum distance between distinct curves; rejects overlapping configurations."""
    if len(curves) < 2:
        raise GeometryError("pairwise_distance needs at least 2 curves")
    pts = [c.position(sample_alphas(c, n)) for c in curves]
    d = np.inf
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            dij = np.linalg.norm(pts[i][:, None, :] - pts[j][None, :, :], axis=-1)
            d = min(d, float(dij.min()))
    if d <= floor:
        raise GeometryError(f"curves overlap or nearly touch: min distance {d:.3g}")
    return d


def enclosed_area(curve: ParamCurve, n: int = 4096) -> float:
    """Area enclosed by a closed curve via the Green/shoelace quadrature."""
    if not curve.closed:
        raise GeometryError("enclosed_area is defined for closed curves only")
    a = np.arange(n) / n
    z = curve.position(a)
    z1 = curve.derivative(a, 1)
    area = 0.5 * float(np.mean(z[:, 0] * z1[:, 1] - z[:, 1] * z1[:, 0]))
    if area <= 0:
        raise GeometryError("closed curve is not counter-clockwise (negative signed area)")
    return area


def point_in_closed_curve(curve: ParamCurve, points, n_poly: int = 2048) -> np.ndarray:
    """Even-odd (ray casting) point-in-region test against a fine polygon."""
    if not curve.closed:
        raise GeometryError("containment test needs a closed curve")
    poly = curve.position(np.arange(n_poly) / n_poly)
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    px, py = pts[:, 0:1], pts[:, 1:2]
    cond = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (py - y1) * (x2 - x1) / np.where(y2 != y1, y2 - y1, 1.0)
    crossings = np.sum(cond & (px < xint), axis=1)
    return (crossings % 2).astype(bool)
