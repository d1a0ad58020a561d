"""Minimum-norm interpolation solvers.

Three convex programs are solved here, all over the affine set {w : Xw = y}
with an lp norm, p in (1, 2]:

* ``solve_min_norm``          -- minimize ||w||_p (the minimum-norm interpolator).
* ``solve_min_l2_in_ball``    -- minimize ||w||_2 subject to ||w||_p <= r.
* ``gauge_projected_truncated`` -- minimize max(||w||_p, ||w||_2 / r).

The first is solved through its smooth concave dual

    max_l  <y, l> - (1/q) ||X^T l||_q^q,      1/p + 1/q = 1,

by damped Newton with an Armijo line search, warm-started along a homotopy in
p descending from 2 (where the dual is quadratic and has a closed form).  The
primal is recovered coordinate-wise as w_i = sign(v_i) |v_i|^(q-1) with
v = X^T l; the minimizers of ||.||_p and of (1/p)||.||_p^p coincide.  Every
solution ships with a feasibility residual and a duality gap computed from the
rescaled dual-feasible point l / ||X^T l||_q.

The other two programs ride on the scalarized family

    w(mu) = argmin_{Xw = v} ||w||_2^2 + mu ||w||_p^p,      mu >= 0,

whose dual is smooth with uniformly bounded curvature weights; sweeping mu
traces the Pareto frontier between the l2 and lp norms of interpolators, and
one bisection over mu lands the constrained or min-max solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, InfeasibleError, RankDeficientDesignError
from .norms import NormSpec, eval_norm, power_norm
from .streams import Design

# Relative eigenvalue threshold below which X X^T is treated as singular.
RANK_EIG_RTOL = 1e-12
# Ball-constraint bisection: relative tolerance and iteration cap.
BALL_REL_TOL = 1e-6
BALL_MAX_BISECT = 60
# Armijo constant and maximal number of halvings in the line search.
ARMIJO_C1 = 1e-4
MAX_BACKTRACKS = 40


@dataclass
class SolverOptions:
    """Tolerances and iteration budgets for the dual Newton solver.

    ``homotopy_steps`` is the number of intermediate p values descending from
    2 to the target; ``None`` selects the default max(8, ceil(4 / (p - 1))).
    ``max_iterations`` caps Newton iterations per homotopy stage.
    """

    tol_feasibility: float = 1e-8
    tol_kkt: float = 1e-8
    max_iterations: int = 200
    homotopy_steps: int | None = None

    def __post_init__(self):
        if self.tol_feasibility <= 0 or self.tol_kkt <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.homotopy_steps is not None and self.homotopy_steps < 1:
            raise ConfigurationError("homotopy_steps must be >= 1")

    def steps_for(self, p: float) -> int:
        if self.homotopy_steps is not None:
            return self.homotopy_steps
        if p >= 2.0:
            return 1
        return max(8, math.ceil(4.0 / (p - 1.0)))


@dataclass
class MniSolution:
    """An interpolating weight vector with its optimality certificates.

    ``feasibility_residual`` is ||Xw - y||_2 / max(||y||_2, 1); ``duality_gap``
    is the norm value minus the rescaled dual bound (an upper bound on the
    suboptimality of a feasible point).  ``path_l2_norms`` records the l2 norm
    of the iterate after each homotopy stage, starting at p = 2.
    """

    weights: np.ndarray = field(repr=False)
    norm_value: float
    feasibility_residual: float
    duality_gap: float
    iterations: int
    status: str
    path_l2_norms: tuple = ()

    @property
    def l2_value(self) -> float:
        return float(np.linalg.norm(self.weights))


@dataclass
class BatchSolution:
    """Column-wise solutions for many right-hand sides sharing one design."""

    weights: np.ndarray = field(repr=False)  # (d, m)
    norm_values: np.ndarray
    feasibility_residuals: np.ndarray
    duality_gaps: np.ndarray
    iterations: int
    statuses: list
    path_l2_norms: np.ndarray = field(repr=False, default=None)  # (stages, m)

    def column(self, j: int) -> MniSolution:
        path = ()
        if self.path_l2_norms is not None:
            path = tuple(self.path_l2_norms[:, j])
        return MniSolution(
            weights=self.weights[:, j].copy(),
            norm_value=float(self.norm_values[j]),
            feasibility_residual=float(self.feasibility_residuals[j]),
            duality_gap=float(self.duality_gaps[j]),
            iterations=self.iterations,
            status=self.statuses[j],
            path_l2_norms=path,
        )


@dataclass
class InterpolationProblem:
    """Design, targets, and the norm to minimize.

    The design may be a sampled :class:`Design` or a plain matrix (for
    injected, hand-built designs in diagnostics and tests).
    """

    design: object
    targets: np.ndarray
    norm: NormSpec

    def __post_init__(self):
        X = self.matrix
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if self.targets.shape[0] != X.shape[0]:
            raise ConfigurationError("targets length must equal the number of design rows")
        if self.norm.dimension != X.shape[1]:
            raise ConfigurationError("norm dimension must equal the number of design columns")
        if not self.norm.solver_admissible:
            raise ConfigurationError("solvers require p in (1, 2]")

    @property
    def matrix(self) -> np.ndarray:
        if isinstance(self.design, Design):
            return self.design.matrix
        return np.asarray(self.design, dtype=np.float64)


def _as_matrix(design) -> np.ndarray:
    if isinstance(design, Design):
        return design.matrix
    return np.asarray(design, dtype=np.float64)


def _gram_factor(X: np.ndarray):
    """Cholesky factor of X X^T, raising if X is numerically row-rank deficient."""
    gram = X @ X.T
    eigs = scipy.linalg.eigvalsh(gram)
    if eigs[0] <= eigs[-1] * RANK_EIG_RTOL or eigs[-1] <= 0.0:
        raise RankDeficientDesignError(
            f"design is numerically rank deficient (eig ratio {eigs[0] / max(eigs[-1], 1e-300):.2e})"
        )
    return scipy.linalg.cho_factor(gram)


def _lp_norms(V: np.ndarray, p: float) -> np.ndarray:
    """Column-wise lp norms of a (d, m) matrix."""
    if p == 2.0:
        return np.linalg.norm(V, axis=0)
    return np.atleast_1d(power_norm(V, p, axis=0))


def _dual_objective(X: np.ndarray, Y: np.ndarray, L: np.ndarray, q: float) -> np.ndarray:
    V = X.T @ L
    vq = _lp_norms(V, q)
    return (Y * L).sum(axis=0) - vq**q / q


def _dual_newton_stage(X, Y, q, L, tol_feas, tol_gap, max_iter):
    """Damped Newton on the dual for one fixed exponent q.

    Returns the updated multipliers and per-column (feasibility, gap,
    converged) arrays; iterates only on unconverged columns.
    """
    n, m = Y.shape
    p = q / (q - 1.0)
    colnorms2 = (X * X).sum(axis=0)
    ynorm = np.maximum(np.linalg.norm(Y, axis=0), 1.0)
    ydot = None
    iters = 0
    diag = np.arange(n)
    for _ in range(max_iter):
        V = X.T @ L
        absV = np.abs(V)
        W = np.sign(V) * absV ** (q - 1.0)
        R = Y - X @ W
        feas = np.linalg.norm(R, axis=0) / ynorm
        pnorm = _lp_norms(W, p)
        vq = _lp_norms(V, q)
        ydot = (Y * L).sum(axis=0)
        dual_val = np.where(vq > 0, ydot / np.where(vq > 0, vq, 1.0), 0.0)
        gap = pnorm - dual_val
        converged = (feas <= tol_feas) & (gap <= tol_gap * np.maximum(pnorm, 1.0))
        if converged.all():
            break
        act = np.flatnonzero(~converged)
        iters += 1
        D = (q - 1.0) * absV[:, act] ** (q - 2.0)  # (d, ma)
        B = X[None, :, :] * D.T[:, None, :]  # (ma, n, d)
        H = B @ X.T  # (ma, n, n)
        trace = D.T @ colnorms2
        eps = 1e-12 * trace / n + 1e-300
        H[:, diag, diag] += eps[:, None]
        grad = R[:, act]
        try:
            S = np.linalg.solve(H, grad.T[:, :, None])[..., 0]  # (ma, n)
        except np.linalg.LinAlgError:
            S = np.linalg.lstsq(H.reshape(-1, n), grad.T.reshape(-1, 1), rcond=None)[0].reshape(len(act), n)
        gdir = (grad * S.T).sum(axis=0)
        obj0 = _dual_objective(X, Y[:, act], L[:, act], q)
        alpha = np.ones(len(act))
        accepted = np.zeros(len(act), dtype=bool)
        L_new = L[:, act].copy()
        for _ in range(MAX_BACKTRACKS):
            pending = np.flatnonzero(~accepted)
            trial = L[:, act[pending]] + alpha[pending] * S[pending].T
            obj_t = _dual_objective(X, Y[:, act[pending]], trial, q)
            ok = np.isfinite(obj_t) & (obj_t >= obj0[pending] + ARMIJO_C1 * alpha[pending] * gdir[pending])
            L_new[:, pending[ok]] = trial[:, ok]
            accepted[pending[ok]] = True
            if accepted.all():
                break
            alpha[pending[~ok]] *= 0.5
        # unaccepted columns keep their current multipliers; they either pass
        # the convergence test next round or exhaust max_iter
        L[:, act[accepted]] = L_new[:, accepted]
    else:
        # recompute certificates after the last update
        V = X.T @ L
        W = np.sign(V) * np.abs(V) ** (q - 1.0)
        R = Y - X @ W
        feas = np.linalg.norm(R, axis=0) / ynorm
        pnorm = _lp_norms(W, p)
        vq = _lp_norms(V, q)
        ydot = (Y * L).sum(axis=0)
        dual_val = np.where(vq > 0, ydot / np.where(vq > 0, vq, 1.0), 0.0)
        gap = pnorm - dual_val
        converged = (feas <= tol_feas) & (gap <= tol_gap * np.maximum(pnorm, 1.0))
    return L, feas, gap, converged, iters


def _rescale_multipliers(X, Y, L, q):
    """Best scalar rescaling of each dual column for a new exponent q.

    Maximizing c <y, l> - (c^q / q) ||X^T l||_q^q over c > 0 gives
    log c = (log <y, l> - q log ||X^T l||_q) / (q - 1).
    """
    V = X.T @ L
    vq = _lp_norms(V, q)
    ydot = (Y * L).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logc = (np.log(ydot) - q * np.log(vq)) / (q - 1.0)
    c = np.where(np.isfinite(logc), np.exp(logc), 1.0)
    c = np.where((ydot > 0) & (vq > 0), c, 1.0)
    return L * c


def solve_min_norm_batch(X: np.ndarray, Y: np.ndarray, norm: NormSpec, opts: SolverOptions | None = None) -> BatchSolution:
    """Solve min ||w||_p s.t. Xw = y for every column y of Y (shared design).

    All columns march through the same homotopy schedule; converged columns
    stop iterating.  Columns report status ``converged`` only when both the
    feasibility residual and the duality gap meet the tolerances at the target
    exponent.
    """
    opts = opts or SolverOptions()
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, d = X.shape
    m = Y.shape[1]
    if Y.shape[0] != n:
        raise ConfigurationError("targets must have one row per design row")
    if not norm.solver_admissible:
        raise ConfigurationError("solvers require p in (1, 2]")
    if norm.dimension != d:
        raise ConfigurationError("norm dimension must equal the number of design columns")
    p = norm.p

    factor = _gram_factor(X)
    L = scipy.linalg.cho_solve(factor, Y)
    W = X.T @ L  # exact least-norm solution for p = 2
    path = [np.linalg.norm(W, axis=0)]
    iterations = 0

    if p == 2.0:
        ynorm = np.maximum(np.linalg.norm(Y, axis=0), 1.0)
        feas = np.linalg.norm(Y - X @ W, axis=0) / ynorm
        norms = np.linalg.norm(W, axis=0)
        dual_val = np.where(norms > 0, (Y * L).sum(axis=0) / np.where(norms > 0, norms, 1.0), 0.0)
        gap = norms - dual_val
        statuses = ["converged" if f <= opts.tol_feasibility else "max_iter" for f in feas]
        return BatchSolution(W, norms, feas, np.maximum(gap, 0.0), 0, statuses, np.array(path))

    steps = opts.steps_for(p)
    p_schedule = np.linspace(2.0, p, steps + 1)[1:]
    stage_tol = max(opts.tol_feasibility, 1e-6)
    feas = gap = None
    converged = np.zeros(m, dtype=bool)
    for idx, p_s in enumerate(p_schedule):
        q_s = p_s / (p_s - 1.0)
        L = _rescale_multipliers(X, Y, L, q_s)
        is_final = idx == len(p_schedule) - 1
        tol_f = opts.tol_feasibility if is_final else stage_tol
        tol_g = opts.tol_kkt if is_final else max(opts.tol_kkt, 1e-6)
        L, feas, gap, converged, iters = _dual_newton_stage(
            X, Y, q_s, L, tol_f, tol_g, opts.max_iterations
        )
        iterations += iters
        V = X.T @ L
        W = np.sign(V) * np.abs(V) ** (q_s - 1.0)
        path.append(np.linalg.norm(W, axis=0))

    norms = _lp_norms(W, p)
    statuses = ["converged" if c else "max_iter" for c in converged]
    return BatchSolution(W, norms, feas, gap, iterations, statuses, np.array(path))


def solve_min_norm(problem: InterpolationProblem, opts: SolverOptions | None = None) -> MniSolution:
    """Minimum-norm interpolator of one target vector; see the module docstring."""
    batch = solve_min_norm_batch(problem.matrix, problem.targets, problem.norm, opts)
    return batch.column(0)


# ---------------------------------------------------------------------------
# Pareto-frontier machinery: min ||w||_2^2 + mu ||w||_p^p over {Xw = v}
# ---------------------------------------------------------------------------


def _prox_power(c: np.ndarray, mu: float, p: float):
    """Coordinate-wise argmin_w of w^2 + mu |w|^p - c w.

    Returns (w, dw/dc, conjugate value c*w - w^2 - mu|w|^p).  The stationarity
    equation 2u + mu p u^(p-1) = |c| is solved on u >= 0 by monotone Newton
    from u = |c|/2 (the objective is concave in u there, so iterates decrease
    to the root).
    """
    a = np.abs(c)
    positive = a > 0
    u = a / 2.0
    for _ in range(60):
        with np.errstate(divide="ignore", invalid="ignore"):
            upow = np.where(positive, u ** (p - 1.0), 0.0)
            h = 2.0 * u + mu * p * upow - a
            hp = 2.0 + mu * p * (p - 1.0) * np.where(u > 0, upow / np.where(u > 0, u, 1.0), 0.0)
        if np.all(h <= 1e-14 * (1.0 + a)):
            break
        u = np.maximum(u - h / hp, 0.0)
    w = np.sign(c) * u
    with np.errstate(divide="ignore", invalid="ignore"):
        upow = np.where(positive, u ** (p - 1.0), 0.0)
        curvature = 2.0 + mu * p * (p - 1.0) * np.where(u > 0, upow / np.where(u > 0, u, 1.0), np.inf)
    dw = np.where(u > 0, 1.0 / curvature, 0.0)
    conj = c * w - w * w - mu * u * upow  # u*upow = |w|^p
    return w, dw, conj


def _frontier_solve(X, v, p, mu, lam0, tol_feas, max_iter):
    """Newton solve of the dual of min ||w||_2^2 + mu ||w||_p^p s.t. Xw = v.

    Returns (w, lam, duality_gap_of_the_subproblem, iterations).
    """
    n = X.shape[0]
    lam = lam0.copy()
    vnorm = max(np.linalg.norm(v), 1.0)
    diag = np.arange(n)
    iters = 0
    for _ in range(max_iter):
        c = X.T @ lam
        w, dw, conj = _prox_power(c, mu, p)
        r = v - X @ w
        if np.linalg.norm(r) / vnorm <= tol_feas:
            break
        iters += 1
        H = (X * dw) @ X.T
        trace = float(np.trace(H))
        H[diag, diag] += 1e-12 * trace / n + 1e-300
        try:
            s = np.linalg.solve(H, r)
        except np.linalg.LinAlgError:
            s = np.linalg.lstsq(H, r, rcond=None)[0]
        obj0 = float(v @ lam - conj.sum())
        gdir = float(r @ s)
        alpha = 1.0
        for _ in range(MAX_BACKTRACKS):
            lam_t = lam + alpha * s
            c_t = X.T @ lam_t
            _, _, conj_t = _prox_power(c_t, mu, p)
            obj_t = float(v @ lam_t - conj_t.sum())
            if math.isfinite(obj_t) and obj_t >= obj0 + ARMIJO_C1 * alpha * gdir:
                lam = lam_t
                break
            alpha *= 0.5
        else:
            break  # stalled; certificates below tell the caller how close we got
    c = X.T @ lam
    w, _, conj = _prox_power(c, mu, p)
    primal = float(w @ w + mu * np.sum(np.abs(w) ** p))
    dual = float(v @ lam - conj.sum())
    gap = max(primal - dual, 0.0)
    return w, lam, gap, iters


def solve_min_l2_in_ball(design, v: np.ndarray, norm: NormSpec, radius: float, opts: SolverOptions | None = None) -> MniSolution:
    """Smallest-l2 interpolator of ``v`` inside the lp ball of the given radius.

    If the unconstrained l2-minimum-norm solution already satisfies the ball
    constraint it is returned directly; otherwise the constraint is activated
    by bisection on the multiplier mu of ||w||_2^2 + mu ||w||_p^p, terminating
    when ||w||_p matches the radius within relative ``BALL_REL_TOL``.

    Raises
    ------
    InfeasibleError
        If the radius is below the smallest achievable lp norm of any
        interpolator; the exception carries that norm as its certificate, and
        the same information is available from the returned solution of
        :func:`solve_min_norm`.
    """
    if radius <= 0:
        raise ConfigurationError("radius must be positive")
    opts = opts or SolverOptions()
    X = _as_matrix(design)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    p = norm.p

    factor = _gram_factor(X)
    lam2 = scipy.linalg.cho_solve(factor, v)
    w2 = X.T @ lam2
    vnorm = max(np.linalg.norm(v), 1.0)
    ball_norm = eval_norm(norm, w2)
    if ball_norm <= radius * (1.0 + BALL_REL_TOL):
        return MniSolution(
            weights=w2,
            norm_value=ball_norm,
            feasibility_residual=float(np.linalg.norm(v - X @ w2) / vnorm),
            duality_gap=0.0,
            iterations=0,
            status="converged",
        )

    reference = solve_min_norm_batch(X, v, norm, opts).column(0)
    if radius < reference.norm_value * (1.0 - BALL_REL_TOL):
        raise InfeasibleError(
            f"radius {radius} below the minimum achievable norm {reference.norm_value}",
            certificate=reference.norm_value,
        )

    # bracket: ||w(mu)||_p decreases from ball_norm (mu=0) toward the minimum
    mu_lo, mu_hi = 0.0, 1.0
    lam = lam2.copy()
    total_iters = 0
    w_hi = None
    for _ in range(200):
        w_hi, lam, _, iters = _frontier_solve(X, v, p, mu_hi, lam, opts.tol_feasibility, opts.max_iterations)
        total_iters += iters
        if _lp_norms(w_hi[:, None], p)[0] <= radius:
            break
        mu_lo = mu_hi
        mu_hi *= 4.0
    else:
        raise InfeasibleError(
            "could not bracket the ball constraint; radius is at the minimum norm",
            certificate=reference.norm_value,
        )

    best_w = w_hi
    best_gap = 0.0
    for _ in range(BALL_MAX_BISECT):
        pn = float(_lp_norms(best_w[:, None], p)[0])
        if abs(pn - radius) <= BALL_REL_TOL * radius:
            break
        mu_mid = math.sqrt(max(mu_lo, mu_hi * 1e-12) * mu_hi) if mu_lo > 0 else mu_hi / 2.0
        w_mid, lam, gap, iters = _frontier_solve(X, v, p, mu_mid, lam, opts.tol_feasibility, opts.max_iterations)
        total_iters += iters
        if float(_lp_norms(w_mid[:, None], p)[0]) > radius:
            mu_lo = mu_mid
        else:
            mu_hi = mu_mid
            best_w, best_gap = w_mid, gap

    pn = float(_lp_norms(best_w[:, None], p)[0])
    feas = float(np.linalg.norm(v - X @ best_w) / vnorm)
    ok = feas <= opts.tol_feasibility and pn <= radius * (1.0 + BALL_REL_TOL)
    return MniSolution(
        weights=best_w,
        norm_value=pn,
        feasibility_residual=feas,
        duality_gap=best_gap,
        iterations=total_iters,
        status="converged" if ok else "max_iter",
    )


def gauge_projected_truncated(design, xi: np.ndarray, norm: NormSpec, radius: float, opts: SolverOptions | None = None) -> float:
    """Gauge of ``xi`` in the projection of the radius-truncated norm ball:

        min over {w : Xw = xi} of max(||w||_p, ||w||_2 / radius).

    The minimizer of the max is Pareto-optimal for (||.||_2, ||.||_p), so it
    lies on the frontier swept by mu -> argmin ||w||_2^2 + mu ||w||_p^p; along
    that path the lp norm decreases while the l2 norm increases, and a single
    bisection on mu locates the crossing of ||w||_p and ||w||_2 / radius.  For
    large radii the truncation is inactive and the value is the plain minimum
    lp norm.
    """
    if radius <= 0:
        raise ConfigurationError("radius must be positive")
    opts = opts or SolverOptions()
    X = _as_matrix(design)
    xi = np.asarray(xi, dtype=np.float64).reshape(-1)
    if not np.any(xi):
        return 0.0
    p = norm.p

    factor = _gram_factor(X)
    lam2 = scipy.linalg.cho_solve(factor, xi)
    w2 = X.T @ lam2
    p0 = eval_norm(norm, w2)
    l0 = float(np.linalg.norm(w2))
    if p0 <= l0 / radius:
        # even the l2-minimal interpolator is norm-cheaper than its truncation
        # level; nothing on the frontier can reduce the l2 term further
        return l0 / radius

    mni = solve_min_norm_batch(X, xi, norm, opts).column(0)
    if mni.norm_value >= mni.l2_value / radius:
        return mni.norm_value  # truncation inactive

    # crossing between mu = 0 (lp > l2/r) and the min-norm end (lp < l2/r)
    lam = lam2.copy()
    mu_lo, mu_hi = 0.0, 1.0
    best = max(p0, l0 / radius)
    best = min(best, max(mni.norm_value, mni.l2_value / radius))
    for _ in range(200):
        w, lam, _, _ = _frontier_solve(X, xi, p, mu_hi, lam, opts.tol_feasibility, opts.max_iterations)
        pn = float(_lp_norms(w[:, None], p)[0])
        ln = float(np.linalg.norm(w))
        best = min(best, max(pn, ln / radius))
        if pn <= ln / radius:
            break
        mu_lo = mu_hi
        mu_hi *= 4.0
    for _ in range(BALL_MAX_BISECT):
        mu_mid = math.sqrt(max(mu_lo, mu_hi * 1e-12) * mu_hi) if mu_lo > 0 else mu_hi / 2.0
        w, lam, _, _ = _frontier_solve(X, xi, p, mu_mid, lam, opts.tol_feasibility, opts.max_iterations)
        pn = float(_lp_norms(w[:, None], p)[0])
        ln = float(np.linalg.norm(w))
        best = min(best, max(pn, ln / radius))
        if abs(pn - ln / radius) <= BALL_REL_TOL * max(pn, 1e-300):
            break
        if pn > ln / radius:
            mu_lo = mu_mid
        else:
            mu_hi = mu_mid
    return best


def brute_force_oracle(problem: InterpolationProblem, resolution: int = 41) -> MniSolution:
    """Grid-search oracle over the affine feasible set (null space dim <= 3).

    Parameterizes {w : Xw = y} as w0 + N t with an orthonormal null-space
    basis, scans the norm over a box guaranteed to contain the minimizer,
    then polishes by cyclic coordinate descent with golden-section line
    searches (the norm is convex along every line).
    """
    if resolution < 2 or resolution > 1000:
        raise ConfigurationError("resolution must lie in [2, 1000]")
    X = problem.matrix
    y = problem.targets
    norm = problem.norm
    n, d = X.shape
    U, svals, Vt = np.linalg.svd(X, full_matrices=True)
    rank = int(np.sum(svals > svals[0] * 1e-10)) if svals.size else 0
    if rank < n:
        raise RankDeficientDesignError("oracle requires a full-row-rank design")
    k = d - rank
    if k > 3:
        raise ConfigurationError(f"null-space dimension {k} exceeds the oracle limit of 3")
    w0 = Vt[:rank].T @ ((U.T @ y)[:rank] / svals[:rank])
    nullspace = Vt[rank:].T  # (d, k), orthonormal columns

    def value(t: np.ndarray) -> float:
        return eval_norm(norm, w0 + nullspace @ t)

    if k == 0:
        best_t = np.zeros(0)
        sweeps = 0
    else:
        box = eval_norm(norm, w0) + float(np.linalg.norm(w0))
        axes = [np.linspace(-box, box, resolution)] * k
        grids = np.meshgrid(*axes, indexing="ij")
        T = np.stack([g.ravel() for g in grids], axis=1)  # (points, k)
        candidates = w0[None, :] + T @ nullspace.T
        if norm.p == 2.0:
            vals = np.linalg.norm(candidates, axis=1)
        else:
            vals = power_norm(candidates, norm.p, axis=1)
        best_t = T[int(np.argmin(vals))].copy()

        golden = (math.sqrt(5.0) - 1.0) / 2.0
        step = 2.0 * box / (resolution - 1)
        sweeps = 0
        for _ in range(200):
            sweeps += 1
            moved = 0.0
            for axis in range(k):
                lo, hi = best_t[axis] - step, best_t[axis] + step
                a, b = lo, hi
                c1 = b - golden * (b - a)
                c2 = a + golden * (b - a)
                f1, f2 = None, None
                for _ in range(60):
                    t1 = best_t.copy()
                    t1[axis] = c1
                    t2 = best_t.copy()
                    t2[axis] = c2
                    f1 = value(t1) if f1 is None else f1
                    f2 = value(t2) if f2 is None else f2
                    if f1 <= f2:
                        b, c2, f2 = c2, c1, f1
                        c1 = b - golden * (b - a)
                        f1 = None
                    else:
                        a, c1, f1 = c1, c2, f2
                        c2 = a + golden * (b - a)
                        f2 = None
                new_val = (a + b) / 2.0
                moved = max(moved, abs(new_val - best_t[axis]))
                best_t[axis] = new_val
            step = max(step * 0.5, 1e-9)
            if moved < 1e-9 * (1.0 + box):
                break

    w = w0 + (nullspace @ best_t if k else 0.0)
    vnorm = max(np.linalg.norm(y), 1.0)
    feas = float(np.linalg.norm(y - X @ w) / vnorm)
    # honest (possibly loose) certificate from the rescaled dual point fitted
    # to the norm gradient at w
    grad = np.sign(w) * np.abs(w) ** (norm.p - 1.0)
    lam = np.linalg.lstsq(X.T, grad, rcond=None)[0]
    v = X.T @ lam
    vq = eval_norm(norm.dual(), v) if norm.p != 2.0 else float(np.linalg.norm(v))
    dual_val = float(lam @ y / vq) if vq > 0 else 0.0
    norm_val = eval_norm(norm, w)
    return MniSolution(
        weights=w,
        norm_value=norm_val,
        feasibility_residual=feas,
        duality_gap=max(norm_val - dual_val, 0.0),
        iterations=sweeps,
        status="converged",
    )
