"""Mapped Poisson solves on the thin layers: Delta p = -2 with flux coupling.

The solve happens on the (alpha, eta) rectangle: with A = J g^{ij} the
transformed operator is div(A grad p) = -2 J, discretized by a conservative
vertex-centered finite-volume scheme (fluxes at face midpoints, mixed terms
by central averaging, a 9-point stencil).  Face coefficients are evaluated
directly from the exact layer metric at the face centers.

Boundary data follows the layer topology: open-curve layers carry p = 0 on
the whole boundary; closed-curve layers carry p = 0 on the outer edge
(eta = -1) and an unknown constant c on the inner edge (eta = 0), fixed so
that the discrete flux entering the enclosed region U equals 2|U| (the
mapped form of the enclosed-area condition).  The constant is found by a
two-solve superposition against a discrete harmonic lift, which reuses one
factorization and satisfies the flux condition to solver precision because
the same face fluxes define both the operator and the constraint.

On a constant-strength circle the discrete solution reproduces the annulus
closed form p = -r^2/2 + (r_out)^2/2 at the nodes to solver precision: the
mapped flux is quadratic in eta and the midpoint-face scheme differentiates
quadratics exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import enclosed_area, perp
from .layer import CertificateError, LayerGrid, metric_columns

DIRECT_SOLVER_MAX_UNKNOWNS = 100_000


class SolverError(RuntimeError):
    """Linear solve failed or did not reach the requested residual."""


@dataclass(frozen=True)
class MappedPoissonProblem:
    """Poisson problem Delta p = -2 on one layer, in mapped coordinates."""

    layer: LayerGrid
    boundary: str  # "open" or "closed"

    def __post_init__(self):
        if self.boundary not in ("open", "closed"):
            raise ValueError(f"unknown boundary type {self.boundary!r}")


def make_problem(layer: LayerGrid) -> MappedPoissonProblem:
    return MappedPoissonProblem(layer=layer, boundary="closed" if layer.curve.closed else "open")


class _MappedOperator:
    """Assembled conservative operator and the discrete top-edge flux."""

    def __init__(self, layer: LayerGrid):
        self.layer = layer
        curve, strength, eps = layer.curve, layer.strength, layer.epsilon
        self.closed = curve.closed
        alpha, eta = layer.alpha, layer.eta
        self.ja, self.ke = len(alpha), len(eta) - 1
        self.d_eta = 1.0 / self.ke
        n = self.ja * (self.ke + 1)
        self.n = n

        if self.closed:
            alpha_ext = np.concatenate([alpha, [1.0]])
            self.h_alpha = np.full(self.ja, 1.0 / self.ja)
            d_alpha_face = np.full(self.ja, 1.0 / self.ja)          # face j+1/2
            alpha_face = (np.arange(self.ja) + 0.5) / self.ja
            self.alpha_span = np.full(self.ja, 2.0 / self.ja)       # alpha_{j+1}-alpha_{j-1}
        else:
            d_alpha_face = np.diff(alpha)                           # ja-1 faces
            alpha_face = 0.5 * (alpha[:-1] + alpha[1:])
            self.h_alpha = np.empty(self.ja)
            self.h_alpha[1:-1] = 0.5 * (alpha[2:] - alpha[:-2])
            self.h_alpha[0] = 0.5 * (alpha[1] - alpha[0])
            self.h_alpha[-1] = 0.5 * (alpha[-1] - alpha[-2])
            self.alpha_span = np.empty(self.ja)
            self.alpha_span[1:-1] = alpha[2:] - alpha[:-2]
            self.alpha_span[0] = self.alpha_span[-1] = np.nan       # never used

        def coeffs(a_pts, e_pts):
            da, de, jac = metric_columns(curve, strength, eps, a_pts, e_pts)
            # degenerate open-curve end columns (gamma = 0) are never assembled
            live = jac != 0.0
            safe = np.where(live, jac, 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                a_aa = np.where(live, np.sum(de * de, axis=-1) / safe, 0.0)
                a_hh = np.where(live, np.sum(da * da, axis=-1) / safe, 0.0)
                a_ah = np.where(live, -np.sum(da * de, axis=-1) / safe, 0.0)
            return a_aa, a_hh, a_ah, jac

        # east faces: (alpha_face, eta_k) for all node rows k
        self.e_aa, _, self.e_ah, _ = coeffs(alpha_face, eta)
        self.d_alpha_face = d_alpha_face

        # north faces: (alpha_j, eta_{k+1/2})
        eta_face = eta[:-1] + 0.5 * self.d_eta
        _, self.n_hh, self.n_ah, self.jac_nface = coeffs(alpha, eta_face)

        self._assemble()

    # index helpers ---------------------------------------------------------
    def idx(self, j, k):
        return np.asarray(j) * (self.ke + 1) + np.asarray(k)

    def _interior_mask(self):
        mask = np.zeros((self.ja, self.ke + 1), dtype=bool)
        mask[:, 1:self.ke] = True
        if not self.closed:
            mask[0, :] = False
            mask[-1, :] = False
        return mask

    def _assemble(self):
        ja, ke, de = self.ja, self.ke, self.d_eta
        interior = self._interior_mask()
        rows, cols, vals = [], [], []

        def add(r, c, v):
            keep = interior.reshape(-1)[r]
            rows.append(r[keep])
            cols.append(c[keep])
            vals.append(v[keep])

        # east faces between columns jl and jr, at interior rows k
        if self.closed:
            jl = np.arange(ja)
            jr = (jl + 1) % ja
        else:
            jl = np.arange(ja - 1)
            jr = jl + 1
        kk = np.arange(1, ke)
        JL, KK = np.meshgrid(jl, kk, indexing="ij")
        JR = np.meshgrid(jr, kk, indexing="ij")[0]
        caa = (self.e_aa[:, 1:ke] / self.d_alpha_face[:, None]) * de
        cah = (self.e_ah[:, 1:ke] / (4.0 * de)) * de
        for sgn, jd in ((1.0, JL), (-1.0, JR)):
            r = self.idx(jd, KK).reshape(-1)
            stencil = [(JR, KK, caa), (JL, KK, -caa),
                       (JL, KK + 1, cah), (JL, KK - 1, -cah),
                       (JR, KK + 1, cah), (JR, KK - 1, -cah)]
            for cj, ck, cv in stencil:
                add(r, self.idx(cj, ck).reshape(-1), (sgn * cv).reshape(-1))

        # north faces between rows k and k+1, at columns with assembled cells
        if self.closed:
            jj = np.arange(ja)
            jp = (jj + 1) % ja
            jm = (jj - 1) % ja
            span = self.alpha_span
        else:
            jj = np.arange(1, ja - 1)
            jp = jj + 1
            jm = jj - 1
            span = self.alpha_span
        kk = np.arange(0, ke)
        JJ, KK = np.meshgrid(jj, kk, indexing="ij")
        JP = np.meshgrid(jp, kk, indexing="ij")[0]
        JM = np.meshgrid(jm, kk, indexing="ij")[0]
        ha = self.h_alpha[jj][:, None]
        chh = (self.n_hh[jj] / de) * ha
        cha = (self.n_ah[jj] / (2.0 * span[jj][:, None])) * ha
        for sgn, kd in ((1.0, KK), (-1.0, KK + 1)):
            r = self.idx(JJ, kd).reshape(-1)
            stencil = [(JJ, KK + 1, chh), (JJ, KK, -chh),
                       (JP, KK, cha), (JM, KK, -cha),
                       (JP, KK + 1, cha), (JM, KK + 1, -cha)]
            for cj, ck, cv in stencil:
                add(r, self.idx(cj, ck).reshape(-1), (sgn * cv).reshape(-1))

        # Dirichlet identity rows
        d_idx = np.nonzero(~interior.reshape(-1))[0]
        rows.append(d_idx)
        cols.append(d_idx)
        vals.append(np.ones(len(d_idx)))

        self.interior = interior
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n)).tocsr()
        self.matrix = mat
        self._lu = None
        self.m_matrix_ok = self._check_m_matrix(mat, d_idx)

    def _check_m_matrix(self, mat, d_idx):
        """Off-sign off-diagonal mass must be negligible against the diagonal.

        The assembled operator is +div(A grad) (negative diagonal); its
        negation should be an M-matrix up to the small mixed-term corners.
        """
        diag = mat.diagonal()
        coo = mat.tocoo()
        viol = (coo.row != coo.col) & (coo.data < 0)
        if not np.any(viol):
            return True
        bad = np.bincount(coo.row[viol], weights=-coo.data[viol], minlength=self.n)
        scale = np.abs(diag) + 1e-300
        mask = np.ones(self.n, dtype=bool)
        mask[d_idx] = False
        return bool(np.max(bad[mask] / scale[mask]) < 1e-3)

    def solve(self, rhs_interior, dirichlet_values, tol):
        """Solve with given interior cell integrals and nodal Dirichlet data."""
        b = np.where(self.interior.reshape(-1), rhs_interior.reshape(-1),
                     dirichlet_values.reshape(-1))
        if self.n <= DIRECT_SOLVER_MAX_UNKNOWNS:
            if self._lu is None:
                self._lu = spla.splu(self.matrix.tocsc())
            p = self._lu.solve(b)
        else:
            ilu = spla.spilu(self.matrix.tocsc(), drop_tol=1e-6, fill_factor=20)
            prec = spla.LinearOperator((self.n, self.n), ilu.solve)
            p, info = spla.gmres(self.matrix, b, M=prec, rtol=tol, maxiter=2000)
            if info != 0:
                raise SolverError(f"iterative solver did not converge (info={info})")
        res = np.max(np.abs(self.matrix @ p - b)) / max(np.max(np.abs(b)), 1e-300)
        if res > max(tol, 1e-9):
            raise SolverError(f"linear solve residual {res:.3e} exceeds tolerance {tol:.1e}")
        return p.reshape(self.ja, self.ke + 1), float(res)

    def top_flux(self, p):
        """Discrete flux (in +eta direction) through the eta = 0 edge, no source."""
        ke, de = self.ke, self.d_eta
        if self.closed:
            jj = np.arange(self.ja)
            jp, jm = (jj + 1) % self.ja, (jj - 1) % self.ja
        else:
            jj = np.arange(1, self.ja - 1)
            jp, jm = jj + 1, jj - 1
        ha = self.h_alpha[jj]
        g = (self.n_hh[jj, ke - 1] / de) * (p[jj, ke] - p[jj, ke - 1])
        g = g + self.n_ah[jj, ke - 1] / (2.0 * self.alpha_span[jj]) * (
            p[jp, ke - 1] - p[jm, ke - 1] + p[jp, ke] - p[jm, ke])
        return float(np.sum(g * ha))

    def top_strip_source(self):
        """Integral of 2 J over the half-cell strip next to eta = 0."""
        ke, de = self.ke, self.d_eta
        j0 = self.layer.jacobian[:, ke]
        jf = self.jac_nface[:, ke - 1]
        return float(np.sum(self.h_alpha * 0.5 * de * (j0 + jf)))


@dataclass(frozen=True)
class PoissonSolution:
    """Nodal solution of the layer Poisson problem with derived fields."""

    problem: MappedPoissonProblem
    p: np.ndarray
    c_eps: float | None
    gradient: np.ndarray
    flux_residual: float
    solver_residual: float
    m_matrix_ok: bool

    @property
    def layer(self) -> LayerGrid:
        return self.problem.layer

    def integral_p(self) -> float:
        layer = self.layer
        return float(np.sum(self.p * layer.jacobian * layer.quad_weights()))

    def max_abs_p(self) -> float:
        return float(np.max(np.abs(self.p)))


def _nodal_gradient(layer: LayerGrid, p: np.ndarray) -> np.ndarray:
    """Physical gradient by metric inversion of mapped finite differences."""
    if layer.curve.closed:
        h = 1.0 / layer.n_alpha
        dpa = (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)) / (2.0 * h)
    else:
        dpa = np.gradient(p, layer.alpha, axis=0, edge_order=2)
    dpe = np.gradient(p, layer.eta, axis=1, edge_order=2)
    jac = layer.jacobian
    live = np.abs(jac) > 1e-14 * max(layer.epsilon * layer.curve.length, 1e-300)
    grad = (-dpa[..., None] * perp(layer.d_eta_R) + dpe[..., None] * perp(layer.d_alpha_R))
    return np.where(live[..., None], grad / np.where(live, jac, 1.0)[..., None], 0.0)


def assemble_and_solve(problem: MappedPoissonProblem, solver_tol: float = 1e-10) -> PoissonSolution:
    """Solve Delta p = -2 on the layer with the paper-topology boundary data."""
    layer = problem.layer
    if layer.certified is not None and not layer.certified.passed:
        raise CertificateError(
            f"layer at epsilon = {layer.epsilon} failed its injectivity certificate; "
            "refusing to solve")
    op = _MappedOperator(layer)
    rhs = -2.0 * layer.jacobian * op.h_alpha[:, None] * op.d_eta

    zero = np.zeros_like(layer.jacobian)
    if problem.boundary == "open":
        p, res = op.solve(rhs, zero, solver_tol)
        c_eps = None
        flux_residual = 0.0
    else:
        p_part, res = op.solve(rhs, zero, solver_tol)
        lift = np.zeros_like(zero)
        lift[:, -1] = 1.0
        p_harm, res2 = op.solve(np.zeros_like(rhs), lift, solver_tol)
        res = max(res, res2)
        area_u = enclosed_area(layer.curve)
        source = op.top_strip_source()
        denom = op.top_flux(p_harm)
        c_eps = (2.0 * area_u + source - op.top_flux(p_part)) / denom
        p = p_part + c_eps * p_harm
        flux_residual = abs(op.top_flux(p) - source - 2.0 * area_u)

    grad = _nodal_gradient(layer, p)
    return PoissonSolution(problem=problem, p=p, c_eps=c_eps, gradient=grad,
                           flux_residual=float(flux_residual), solver_residual=res,
                           m_matrix_ok=op.m_matrix_ok)


def solve_manufactured(layer: LayerGrid, exact, laplacian, solver_tol: float = 1e-10):
    """Solve Delta p = laplacian(x, y) with Dirichlet data from ``exact``.

    Returns (numerical p, exact p at nodes); used to verify the O(h^2) order
    of the mapped discretization.
    """
    op = _MappedOperator(layer)
    x, y = layer.positions[..., 0], layer.positions[..., 1]
    rhs = laplacian(x, y) * layer.jacobian * op.h_alpha[:, None] * op.d_eta
    p, _ = op.solve(rhs, exact(x, y), solver_tol)
    return p, exact(x, y)


# derived checks ---------------------------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    """p split into the linear-in-eta profile and the remainder q."""

    p_tilde: np.ndarray
    q: np.ndarray
    beta: float
    max_q_over_eps2: float
    c_over_eps_gap: float        # |c/eps - beta| / eps
    grad_tilde_deficit: float    # max |grad p_tilde - (beta/gamma) n|


def decompose_p(solution: PoissonSolution) -> Decomposition:
    """Closed-curve split p = c (1 + eta) + q and the limiting-slope checks."""
    if solution.problem.boundary != "closed":
        raise ValueError("decompose_p applies to closed-curve layers only")
    layer = solution.layer
    eps, c = layer.epsilon, solution.c_eps
    p_tilde = c * (1.0 + layer.eta)[None, :] * np.ones((layer.n_alpha, 1))
    q = solution.p - p_tilde

    g = layer.strength.value(layer.alpha)
    beta = 2.0 * enclosed_area(layer.curve) / (
        layer.curve.length * float(np.sum(layer.w_alpha / g)))

    grad_tilde = (c / layer.jacobian)[..., None] * perp(layer.d_alpha_R)
    n = layer.curve.normal(layer.alpha)
    target = (beta / g)[:, None] * n
    deficit = np.max(np.linalg.norm(grad_tilde - target[:, None, :], axis=-1))
    return Decomposition(p_tilde=p_tilde, q=q, beta=float(beta),
                         max_q_over_eps2=float(np.max(np.abs(q)) / eps**2),
                         c_over_eps_gap=float(abs(c / eps - beta) / eps),
                         grad_tilde_deficit=float(deficit))


def talenti_check(solution: PoissonSolution):
    """Gaps of the rearrangement inequalities sup p <= |D|/2pi, int p <= |D|^2/4pi."""
    layer = solution.layer
    area = float(np.sum(layer.jacobian * layer.quad_weights()))
    sup_gap = area / (2.0 * np.pi) - float(np.max(solution.p))
    int_gap = area**2 / (4.0 * np.pi) - solution.integral_p()
    return float(sup_gap), float(int_gap)


def boundary_gradient_check(solution: PoissonSolution) -> float:
    """Max |grad q| on the curve edge (eta = 0); expected O(eps)."""
    if solution.problem.boundary != "closed":
        raise ValueError("boundary_gradient_check applies to closed-curve layers only")
    layer = solution.layer
    c = solution.c_eps
    grad_tilde = (c / layer.jacobian[:, -1])[:, None] * perp(layer.d_alpha_R[:, -1])
    grad_q = solution.gradient[:, -1] - grad_tilde
    return float(np.max(np.linalg.norm(grad_q, axis=-1)))


def dump_fields(solution: PoissonSolution, path) -> None:
    """CSV dump of (alpha, eta, x, y, p, q_or_nan, grad_x, grad_y)."""
    layer = solution.layer
    try:
        q = decompose_p(solution).q if solution.problem.boundary == "closed" else np.full_like(solution.p, np.nan)
    except ValueError:
        q = np.full_like(solution.p, np.nan)
    A, E = np.meshgrid(layer.alpha, layer.eta, indexing="ij")
    cols = [A, E, layer.positions[..., 0], layer.positions[..., 1],
            solution.p, q, solution.gradient[..., 0], solution.gradient[..., 1]]
    data = np.stack([c.reshape(-1) for c in cols], axis=1)
    header = "alpha,eta,x,y,p,q,grad_x,grad_y"
    np.savetxt(path, data, delimiter=",", header=header, comments="")
