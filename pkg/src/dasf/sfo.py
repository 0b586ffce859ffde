"""Spatial filter optimization: problem families, local instances, solvers.

Every problem couples second-order statistics of one or two streams with
deterministic terms and at most one quadratic ("metric") constraint family.
The same solver code serves the network-wide problem, where the metric is
the identity, and the compressed per-node problems produced by the fusion
engine, where the metric is C^T C for the current transition matrix C.

Shipped families:

* mmse  - unconstrained target estimation, closed-form normal equations
* qcqp  - quadratic objective, one metric-ball and one linear-response
          equality constraint, solved via null-space elimination plus
          bisection on the ball multiplier
* tro   - filtered-power trace ratio of two streams on the metric-orthonormal
          manifold, solved by a ratio fixed point over generalized
          eigenvector subproblems
* scqp  - quadratic objective on the metric unit sphere, solved via the
          secular equation of the shifted linear system
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, ClassVar

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .signals import (
    SampleBatch,
    estimate_covariance,
    estimate_cross,
    mean_squared_error,
    mean_squared_norm,
)

__all__ = [
    "SfoProblem",
    "MmseProblem",
    "QcqpProblem",
    "TroProblem",
    "ScqpProblem",
    "CompressedInstance",
    "SolveOutcome",
    "BoundCheck",
    "SolverError",
    "InfeasibleProblemError",
    "solve_mmse",
    "solve_qcqp",
    "solve_tro",
    "solve_scqp",
    "solve_instance",
    "centralized_instance",
    "solve_centralized",
    "evaluate_objective",
    "constraint_residuals",
    "check_constraint_bound",
    "align_signs",
    "align_orthogonal",
    "align_to_anchor",
    "FEASIBILITY_RTOL",
]


class SolverError(RuntimeError):
    """A solver could not produce a solution meeting its contract."""


class InfeasibleProblemError(SolverError):
    """The constraint set of an instance is empty."""


FEASIBILITY_RTOL = 1e-8     # relative feasibility tolerance on returned solutions
BALL_TOL = 1e-10            # bisection target |tr(X^T M X) - alpha^2| when active
RATIO_TOL = 1e-10           # trace-ratio fixed-point tolerance
RATIO_MAX_ITER = 200
COND_LIMIT = 1e12           # conditioning threshold for diagonal loading
DIAG_LOAD = 1e-10           # loading factor, scaled by trace(R)/dim


# --------------------------------------------------------------------------
# problem families


@dataclass(frozen=True)
class SfoProblem:
    """Base class: a filter-width plus family-specific deterministic data."""

    n_filters: int

    kind: ClassVar[str] = "abstract"
    uses_second_stream: ClassVar[bool] = False
    uses_target: ClassVar[bool] = False
    needs_metric: ClassVar[bool] = False
    # solution-set symmetry the engine may search when tie-breaking:
    # "none", "sign" (per-column flips), or "orthogonal" (right O(Q) orbit)
    symmetry: ClassVar[str] = "none"

    def __post_init__(self):
        if self.n_filters < 1:
            raise ValueError("n_filters must be positive")

    def b_term_matrices(self) -> dict[str, np.ndarray]:
        """Named network-wide linear-term matrices, each (M, L)."""
        return {}

    def constraint_count(self) -> int:
        """Number of scalar constraints (matrix equalities count entrywise)."""
        return 0

    def objective_on(self, x, y=None, v=None, s=None, terms=None) -> float:
        raise NotImplementedError

    def residuals_on(self, x, metric=None, terms=None) -> np.ndarray:
        """Per-constraint feasibility residuals (violations, relative scale)."""
        return np.zeros(0)

    def random_feasible(self, dim: int, rng) -> np.ndarray:
        """A random (dim, n_filters) point satisfying the identity-metric constraints."""
        raise NotImplementedError


def _metric_quadratic(x: np.ndarray, metric: np.ndarray | None) -> np.ndarray:
    """X^T M X with M = identity when metric is None."""
    return x.T @ x if metric is None else x.T @ metric @ x


@dataclass(frozen=True)
class MmseProblem(SfoProblem):
    """Estimate known target rows from the primary stream, minimum MSE.

    Unconstrained; n_filters must match the number of target rows.
    """

    kind: ClassVar[str] = "mmse"
    uses_target: ClassVar[bool] = True

    def objective_on(self, x, y=None, v=None, s=None, terms=None) -> float:
        return mean_squared_error(s, x.T @ y)

    def random_feasible(self, dim, rng):
        return rng.standard_normal((dim, self.n_filters))


@dataclass(frozen=True)
class QcqpProblem(SfoProblem):
    """Quadratic objective with a metric ball and a linear-response equality.

    minimize   0.5 E||x(t)||^2 - tr(X^T A),  x(t) = X^T y(t)
    subject to tr(X^T M X) <= radius^2  and  X^T c = target_response

    where A = ``linear_term`` (M, Q), c = ``gain_vector`` (M,), and M is the
    identity network-wide. Feasibility requires radius^2 >= ||d||^2 / ||c||^2.
    """

    linear_term: np.ndarray = None
    gain_vector: np.ndarray = None
    target_response: np.ndarray = None
    radius: float = 1.0

    kind: ClassVar[str] = "qcqp"
    needs_metric: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        a = np.atleast_2d(np.asarray(self.linear_term, dtype=float))
        c = np.asarray(self.gain_vector, dtype=float).ravel()
        d = np.asarray(self.target_response, dtype=float).ravel()
        if a.shape[1] != self.n_filters or d.size != self.n_filters:
            raise ValueError("linear_term columns and target_response must match n_filters")
        if a.shape[0] != c.size:
            raise ValueError("linear_term rows and gain_vector must match")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "linear_term", a)
        object.__setattr__(self, "gain_vector", c)
        object.__setattr__(self, "target_response", d)

    def b_term_matrices(self):
        return {"linear": self.linear_term, "gain": self.gain_vector[:, None]}

    def constraint_count(self):
        return 1 + self.n_filters

    def objective_on(self, x, y=None, v=None, s=None, terms=None):
        a = (terms or self.b_term_matrices())["linear"]
        return 0.5 * mean_squared_norm(x.T @ y) - float(np.sum(x * a))

    def residuals_on(self, x, metric=None, terms=None):
        c = (terms or self.b_term_matrices())["gain"].ravel()
        d = self.target_response
        ball = np.trace(_metric_quadratic(x, metric)) - self.radius**2
        out = np.empty(1 + self.n_filters)
        out[0] = max(0.0, ball) / max(1.0, self.radius**2)
        out[1:] = np.abs(x.T @ c - d) / max(1.0, float(np.max(np.abs(d), initial=0.0)))
        return out

    def random_feasible(self, dim, rng):
        c, d, r2 = self.gain_vector, self.target_response, self.radius**2
        x = rng.standard_normal((dim, self.n_filters))
        x -= np.outer(c, c @ x - d) / (c @ c)
        x_min = np.outer(c, d) / (c @ c)      # minimum-norm point on the plane
        h = x - x_min                         # plane-parallel part, orthogonal to x_min
        slack = r2 - float(np.sum(x_min * x_min))
        if slack < 0:
            raise InfeasibleProblemError("radius below the minimum-norm response")
        hn = float(np.sum(h * h))
        if hn > 0.9 * slack:
            h *= np.sqrt(0.9 * slack / hn) if slack > 0 else 0.0
        return x_min + h


@dataclass(frozen=True)
class TroProblem(SfoProblem):
    """Maximize the filtered-power ratio of the second stream over the first.

    maximize   E||X^T v(t)||^2 / E||X^T y(t)||^2
    subject to X^T M X = I

    reported as a minimization of the negated ratio. The solution set is the
    full right-orthogonal orbit of any optimizer.
    """

    kind: ClassVar[str] = "tro"
    uses_second_stream: ClassVar[bool] = True
    needs_metric: ClassVar[bool] = True
    symmetry: ClassVar[str] = "orthogonal"

    def constraint_count(self):
        return self.n_filters**2

    def objective_on(self, x, y=None, v=None, s=None, terms=None):
        return -(mean_squared_norm(x.T @ v) / mean_squared_norm(x.T @ y))

    def residuals_on(self, x, metric=None, terms=None):
        gap = _metric_quadratic(x, metric) - np.eye(self.n_filters)
        return np.abs(gap).ravel()

    def random_feasible(self, dim, rng):
        if dim < self.n_filters:
            raise ValueError("dimension below filter count")
        q, _ = np.linalg.qr(rng.standard_normal((dim, self.n_filters)))
        return q


@dataclass(frozen=True)
class ScqpProblem(SfoProblem):
    """Quadratic objective on the metric unit sphere.

    minimize   0.5 E||x(t)||^2 + tr(X^T A)
    subject to tr(X^T M X) = 1
    """

    linear_term: np.ndarray = None

    kind: ClassVar[str] = "scqp"
    needs_metric: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        a = np.atleast_2d(np.asarray(self.linear_term, dtype=float))
        if a.shape[1] != self.n_filters:
            raise ValueError("linear_term columns must match n_filters")
        object.__setattr__(self, "linear_term", a)

    def b_term_matrices(self):
        return {"linear": self.linear_term}

    def constraint_count(self):
        return 1

    def objective_on(self, x, y=None, v=None, s=None, terms=None):
        a = (terms or self.b_term_matrices())["linear"]
        return 0.5 * mean_squared_norm(x.T @ y) + float(np.sum(x * a))

    def residuals_on(self, x, metric=None, terms=None):
        return np.array([abs(np.trace(_metric_quadratic(x, metric)) - 1.0)])

    def random_feasible(self, dim, rng):
        x = rng.standard_normal((dim, self.n_filters))
        return x / np.sqrt(np.sum(x * x))


# --------------------------------------------------------------------------
# instances and outcomes


@dataclass
class CompressedInstance:
    """Data for one solve: local batch, compressed terms, metric, anchor.

    With ``metric`` None and terms equal to the network-wide ones this is the
    centralized problem. The fusion engine builds per-node instances whose
    metric is C^T C and whose terms are C^T B for the transition matrix C.
    """

    problem: SfoProblem
    y: np.ndarray                               # (dim, N) local primary batch
    v: np.ndarray | None = None                 # (dim, N) local second stream
    s: np.ndarray | None = None                 # (S, N) target rows, known everywhere
    b_terms: dict[str, np.ndarray] = field(default_factory=dict)
    metric: np.ndarray | None = None            # (dim, dim), None = identity
    anchor: np.ndarray | None = None            # (dim, Q) tie-break reference

    @property
    def dim(self) -> int:
        return self.y.shape[0]

    @property
    def n_samples(self) -> int:
        return self.y.shape[1]

    @cached_property
    def cov_y(self) -> np.ndarray:
        return estimate_covariance(self.y)

    @cached_property
    def cov_v(self) -> np.ndarray:
        if self.v is None:
            raise ValueError("instance has no second stream")
        return estimate_covariance(self.v)

    def metric_or_eye(self) -> np.ndarray:
        return np.eye(self.dim) if self.metric is None else self.metric

    def term(self, name: str) -> np.ndarray:
        if name in self.b_terms:
            return self.b_terms[name]
        return self.problem.b_term_matrices()[name]

    def objective(self, x: np.ndarray) -> float:
        return self.problem.objective_on(
            x, y=self.y, v=self.v, s=self.s,
            terms=self.b_terms or None,
        )

    def residuals(self, x: np.ndarray) -> np.ndarray:
        return self.problem.residuals_on(x, metric=self.metric, terms=self.b_terms or None)


@dataclass
class SolveOutcome:
    """Solver result: solution, local objective, feasibility, effort."""

    x: np.ndarray
    objective: float
    residuals: np.ndarray
    iterations: int
    history: tuple[float, ...] = ()   # inner objective/ratio trace when iterative


def _finalize(instance: CompressedInstance, x: np.ndarray, iterations: int,
              history=()) -> SolveOutcome:
    """Shared exit path: feasibility check against the instance's metric."""
    res = instance.residuals(x)
    if res.size and float(res.max()) > FEASIBILITY_RTOL:
        raise SolverError(f"solution violates constraints (max residual {res.max():.3e})")
    return SolveOutcome(
        x=x,
        objective=instance.objective(x),
        residuals=res,
        iterations=iterations,
        history=tuple(history),
    )


# --------------------------------------------------------------------------
# tie-break helpers


def align_signs(x: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Flip columns of x so that ||x - anchor||_F is minimized over signs."""
    dots = np.sum(x * anchor, axis=0)
    flips = np.where(dots < 0, -1.0, 1.0)
    return x * flips


def align_orthogonal(x: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Right-multiply x by the orthogonal matrix closest-mapping it to anchor."""
    u, _, vt = np.linalg.svd(x.T @ anchor)
    return x @ (u @ vt)


def align_to_anchor(x: np.ndarray, anchor: np.ndarray | None, symmetry: str) -> np.ndarray:
    if anchor is None or symmetry == "none":
        return x
    if symmetry == "sign":
        return align_signs(x, anchor)
    if symmetry == "orthogonal":
        return align_orthogonal(x, anchor)
    raise ValueError(f"unknown symmetry '{symmetry}'")


# --------------------------------------------------------------------------
# solvers


def solve_mmse(instance: CompressedInstance) -> SolveOutcome:
    """Closed-form normal equations with conditional diagonal loading.

    Solves R x = r for R the batch covariance and r the batch
    cross-correlation with the target rows. When cond(R) exceeds COND_LIMIT
    the diagonal is loaded with DIAG_LOAD * trace(R) / dim.
    """
    if instance.s is None:
        raise SolverError("mmse needs target rows on the instance")
    prob = instance.problem
    if instance.s.shape[0] != prob.n_filters:
        raise SolverError("target row count must equal n_filters")
    cov = instance.cov_y
    if np.linalg.cond(cov) > COND_LIMIT:
        cov = cov + (DIAG_LOAD * np.trace(cov) / cov.shape[0]) * np.eye(cov.shape[0])
    cross = estimate_cross(instance.y, instance.s)
    x = sla.solve(cov, cross, assume_a="sym")
    return _finalize(instance, x, iterations=1)


def _qcqp_secular(instance: CompressedInstance):
    """Prepare the reduced secular equation for the ball multiplier.

    Eliminates the linear-response equality X^T c = d via a null-space basis
    Z of c^T, writes X = X_p + Z U, and diagonalizes the reduced pencil
    (Z^T R Z, Z^T M Z) so that the stationarity system for any multiplier mu
    is diagonal and the ball value is a cheap scalar function of mu.
    """
    prob: QcqpProblem = instance.problem
    cov = instance.cov_y
    a = instance.term("linear")
    c = instance.term("gain").ravel()
    d = prob.target_response
    metric = instance.metric_or_eye()

    cn2 = float(c @ c)
    if cn2 <= 0.0 or not np.isfinite(cn2):
        raise SolverError("gain vector is zero after compression")
    # feasibility: the minimum metric-ball value on the response plane
    min_ball = float(d @ d) / float(c @ sla.solve(metric, c, assume_a="pos"))
    if prob.radius**2 < min_ball * (1.0 - 1e-9):
        raise InfeasibleProblemError(
            f"radius^2 {prob.radius**2:.6g} below plane minimum {min_ball:.6g}"
        )

    x_p = np.outer(c, d) / cn2
    z = sla.null_space(c[None, :])
    return cov, a, c, d, metric, x_p, z, min_ball


def solve_qcqp(instance: CompressedInstance) -> SolveOutcome:
    """Ball-constrained quadratic program with a linear-response equality.

    Null-space elimination of the equality leaves a trust-region-like
    subproblem; the optimal ball multiplier mu >= 0 solves a scalar secular
    equation, found by bisection on an expanding bracket until the ball value
    matches radius^2 to BALL_TOL. mu = 0 is returned immediately when the
    equality-only minimizer already sits inside the ball. The problem is
    convex, so the KKT point found is the global minimum and no tie-break is
    needed.
    """
    prob: QcqpProblem = instance.problem
    cov, a, c, d, metric, x_p, z, min_ball = _qcqp_secular(instance)
    r2 = prob.radius**2

    if z.shape[1] == 0:
        # the plane pins X completely (dim == 1)
        return _finalize(instance, x_p, iterations=0)

    rzz = z.T @ cov @ z
    mzz = z.T @ metric @ z
    lam, vec = sla.eigh(rzz, mzz)         # vec^T mzz vec = I
    lam = np.maximum(lam, 0.0)            # covariance pencil, clip roundoff
    b0 = vec.T @ (z.T @ (a - cov @ x_p))  # constant part of the reduced rhs
    b1 = vec.T @ (z.T @ (metric @ x_p))   # part multiplying -mu
    p0 = float(np.trace(x_p.T @ metric @ x_p))

    def ball_value(mu: float) -> float:
        w = (b0 - mu * b1) / (lam + mu)[:, None]
        return p0 + 2.0 * float(np.sum(w * b1)) + float(np.sum(w * w))

    def solution(mu: float) -> np.ndarray:
        w = (b0 - mu * b1) / (lam + mu)[:, None]
        return x_p + z @ (vec @ w)

    iterations = 0
    if lam.min() > 0.0 and ball_value(0.0) <= r2 + BALL_TOL:
        return _finalize(instance, solution(0.0), iterations=0)

    # the ball is active: g(mu) = ball_value - r2 decreases to min_ball - r2 <= 0
    lo, g_lo = 0.0, np.inf
    hi = max(1.0, float(lam.max()))
    for _ in range(200):
        iterations += 1
        if ball_value(hi) <= r2:
            break
        lo = hi
        hi *= 2.0
    else:
        raise SolverError("ball multiplier bracket did not close")
    for _ in range(300):
        iterations += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # interval exhausted in floating point
        g = ball_value(mid) - r2
        if g > 0.0:
            lo = mid
        else:
            hi = mid
        if abs(g) <= min(BALL_TOL, 1e-13 * max(1.0, r2)):
            break
    mu = 0.5 * (lo + hi)
    return _finalize(instance, solution(mu), iterations=iterations)


def solve_tro(instance: CompressedInstance) -> SolveOutcome:
    """Trace-ratio maximization on the metric-orthonormal manifold.

    Alternates between evaluating the current ratio rho and replacing the
    iterate with the n_filters principal generalized eigenvectors of
    (R_v - rho R_y, M). The produced rho sequence is non-decreasing; the
    fixed point is the global maximizer. Stops when the ratio moves by at
    most RATIO_TOL, returning the previous iterate in that case so that a
    stationary anchor is returned unchanged (constant-ratio instances).
    Per-column signs are flipped toward the anchor.
    """
    prob: TroProblem = instance.problem
    cov_y = instance.cov_y
    cov_v = instance.cov_v
    metric = instance.metric_or_eye()
    n = prob.n_filters

    anchor = instance.anchor
    x = _metric_orthonormalize(anchor if anchor is not None else np.eye(instance.dim, n), metric)

    def ratio(xx: np.ndarray) -> float:
        den = float(np.trace(xx.T @ cov_y @ xx))
        if den <= 0.0:
            raise SolverError("primary-stream covariance not positive definite")
        return float(np.trace(xx.T @ cov_v @ xx)) / den

    rho = ratio(x)
    history = [rho]
    converged = False
    iterations = 0
    for _ in range(RATIO_MAX_ITER):
        iterations += 1
        _, vec = sla.eigh(cov_v - rho * cov_y, metric)
        x_new = vec[:, -n:][:, ::-1]         # principal columns, descending
        rho_new = ratio(x_new)
        history.append(rho_new)
        if abs(rho_new - rho) <= RATIO_TOL:
            converged = True
            break                             # keep x, the anchor-closest candidate
        x, rho = x_new, rho_new
    if not converged:
        raise SolverError(f"trace ratio did not converge in {RATIO_MAX_ITER} iterations")
    if anchor is not None:
        x = align_signs(x, anchor)
    return _finalize(instance, x, iterations=iterations, history=history)


def _metric_orthonormalize(x: np.ndarray, metric: np.ndarray) -> np.ndarray:
    """Return x b with b chosen so that (x b)^T metric (x b) = I."""
    gram = x.T @ metric @ x
    lam, vec = sla.eigh(gram)
    if lam.min() <= 1e-12 * max(1.0, lam.max()):
        raise SolverError("anchor is rank deficient under the metric")
    return x @ (vec / np.sqrt(lam)) @ vec.T


def solve_scqp(instance: CompressedInstance) -> SolveOutcome:
    """Quadratic minimization on the metric unit sphere via a secular equation.

    Stationarity reads (R + mu M) X = -A with a scalar multiplier mu; in the
    generalized eigenbasis of (R, M) the sphere condition becomes
    phi(mu) = sum_ij beta_ij^2 / (lambda_i + mu)^2 = 1, whose unique root on
    (-lambda_min, inf) is the global minimizer. The bracket is expanded
    geometrically (up to 1e6 times the data scale) before brentq. When A has
    no component in the bottom eigenspace and the interior pseudo-solution
    sits inside the sphere (the hard case, covering A = 0), the solution is
    completed along the bottom eigenvector, with sign and mixing direction
    tie-broken toward the anchor.
    """
    prob: ScqpProblem = instance.problem
    cov = instance.cov_y
    a = instance.term("linear")
    metric = instance.metric_or_eye()
    n = prob.n_filters

    try:
        lam, u = sla.eigh(cov, metric)       # u^T metric u = I
    except np.linalg.LinAlgError as exc:
        raise SolverError("metric is not positive definite") from exc
    beta = u.T @ a
    lam_min = float(lam[0])
    scale = max(1.0, float(np.abs(lam).max()), float(np.abs(beta).max()))

    def weights(nu: float) -> np.ndarray:
        # nu = mu + lam_min > 0 parametrizes the admissible branch
        return -beta / (lam - lam_min + nu)[:, None]

    def phi(nu: float) -> float:
        w = weights(nu)
        return float(np.sum(w * w))

    bottom = lam <= lam_min + 1e-10 * scale
    beta_norm = float(np.abs(beta).max(initial=0.0))
    hard = float(np.abs(beta[bottom]).max(initial=0.0)) <= 1e-12 * max(1.0, beta_norm)

    if hard:
        gap = lam - lam_min
        w0 = np.zeros_like(beta)
        w0[~bottom] = -beta[~bottom] / gap[~bottom][:, None]
        inside = 1.0 - float(np.sum(w0 * w0))
        if inside >= -1e-12:
            # boundary multiplier mu = -lam_min, complete along the bottom eigenvector
            tau = np.sqrt(max(inside, 0.0))
            u1 = u[:, int(np.argmax(bottom))]
            x0 = u @ w0
            direction = np.zeros(n)
            direction[0] = 1.0
            if instance.anchor is not None:
                g = (instance.anchor - x0).T @ metric @ u1
                gn = float(np.linalg.norm(g))
                if gn > 0:
                    direction = g / gn
            x = x0 + tau * np.outer(u1, direction)
            return _finalize(instance, x, iterations=0)
        # pseudo-solution overshoots the sphere: the root is interior after all

    # regular branch: phi is strictly decreasing on nu > 0 with a unique root
    nu_lo = max(1e-8 * scale, 1e-300)
    for _ in range(400):
        if phi(nu_lo) > 1.0:
            break
        nu_lo *= 0.5
        if nu_lo < 1e-250:
            raise SolverError("secular equation has no admissible root")
    nu_hi = max(1.0, float(np.linalg.norm(beta))) * np.sqrt(beta.shape[1])
    expansions = 0
    while phi(nu_hi) >= 1.0:
        nu_hi *= 2.0
        expansions += 1
        if nu_hi > 1e6 * max(scale, 1.0):
            raise SolverError("secular bracket expansion exceeded its budget")
    nu_root, result = brentq(
        lambda nu: phi(nu) - 1.0, nu_lo, nu_hi,
        xtol=1e-15 * max(1.0, scale), rtol=8.9e-16, maxiter=200, full_output=True,
    )
    x = u @ weights(nu_root)
    return _finalize(instance, x, iterations=result.iterations + expansions)


_SOLVERS: dict[str, Callable[[CompressedInstance], SolveOutcome]] = {
    "mmse": solve_mmse,
    "qcqp": solve_qcqp,
    "tro": solve_tro,
    "scqp": solve_scqp,
}


def solve_instance(instance: CompressedInstance) -> SolveOutcome:
    """Dispatch an instance to the solver of its problem family."""
    return _SOLVERS[instance.problem.kind](instance)


def centralized_instance(problem: SfoProblem, batch: SampleBatch,
                         anchor: np.ndarray | None = None) -> CompressedInstance:
    """The network-wide problem as an identity-metric instance."""
    if problem.uses_second_stream and batch.v is None:
        raise ValueError("problem needs a second stream but the batch has none")
    if problem.uses_target and batch.s is None:
        raise ValueError("problem needs target rows but the batch has none")
    return CompressedInstance(
        problem=problem,
        y=batch.y,
        v=batch.v if problem.uses_second_stream else None,
        s=batch.s if problem.uses_target else None,
        b_terms=dict(problem.b_term_matrices()),
        metric=None,
        anchor=anchor,
    )


def solve_centralized(problem: SfoProblem, batch: SampleBatch,
                      anchor: np.ndarray | None = None) -> SolveOutcome:
    return solve_instance(centralized_instance(problem, batch, anchor))


# --------------------------------------------------------------------------
# network-wide evaluation helpers


def evaluate_objective(problem: SfoProblem, x: np.ndarray, batch: SampleBatch) -> float:
    """Network-wide objective at x, using the direct batch matrix estimators."""
    return problem.objective_on(
        x,
        y=batch.y,
        v=batch.v if problem.uses_second_stream else None,
        s=batch.s if problem.uses_target else None,
    )


def constraint_residuals(problem: SfoProblem, x: np.ndarray,
                         batch: SampleBatch | None = None) -> np.ndarray:
    """Network-wide constraint residuals at x (identity metric)."""
    return problem.residuals_on(x)


@dataclass(frozen=True)
class BoundCheck:
    """Result of the constraint-count sanity check against network size."""

    applicable: bool
    count: int
    limit: float | None
    ok: bool | None


def check_constraint_bound(problem: SfoProblem, graph) -> BoundCheck:
    """Warn when the constraint count exceeds the network's update capacity.

    The per-iteration local problems can absorb roughly
    min(Q^2 / (K-1) * sum_k deg(k), (1 + min_k deg(k)) * Q^2) scalar
    constraints; more than that and convergence guarantees degrade. Advisory
    only: a RuntimeWarning is emitted, nothing fails. Single-node networks
    are reported as not applicable.
    """
    count = problem.constraint_count()
    k = graph.node_count
    if k < 2:
        return BoundCheck(applicable=False, count=count, limit=None, ok=None)
    degs = [graph.degree(node) for node in graph.nodes]
    q2 = problem.n_filters**2
    limit = min(q2 / (k - 1) * sum(degs), (1 + min(degs)) * q2)
    ok = count <= limit
    if not ok:
        warnings.warn(
            f"constraint count {count} exceeds the network capacity bound {limit:.6g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return BoundCheck(applicable=True, count=count, limit=limit, ok=ok)
