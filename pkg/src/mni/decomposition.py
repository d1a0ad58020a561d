"""Nested Monte Carlo estimation of the mean-squared-error split of the
minimum-norm interpolator, its degree-1 Hermite linearization, and related
variance diagnostics.

The MSE of an interpolator of y = X w* + noise splits, by the law of total
variance and Pythagoras in l2, into

* ``signal_error``      -- energy lost from the true signal direction by the
                           noise-averaged solution (shrinkage),
* ``orthogonal_error``  -- energy the averaged solution adds orthogonally to
                           the signal,
* ``noise_error``       -- expected conditional variance given the design.

``structural_error`` is the sum of the first two.  The estimators draw
designs in an outer loop and noise in an inner loop; the plug-in conditional
mean overstates the structural part by (conditional variance) / inner_m, and
that bias is removed with the standard unbiased correction, after which the
per-design identity signal + orthogonal + noise = mse holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, EstimatorError, InfeasibleError, UndefinedMedianError
from .geometry import FAILURE_BUDGET, estimate_mean_norm
from .norms import NormSpec, curvature_constants, eval_norm, power_norm
from .parallel import run_indexed
from .solvers import SolverOptions, solve_min_l2_in_ball, solve_min_norm_batch
from .stats import Estimate, mean_estimate
from .streams import (
    AUX_STREAM,
    DESIGN_STREAM,
    NOISE_STREAM,
    Design,
    DesignSpec,
    NoiseSpec,
    StreamKey,
    derive_key,
    sample_design,
    sample_noise,
)


@dataclass(frozen=True)
class GroundTruth:
    """The signal vector with its bookkeeping norms.

    Either the zero vector (the degenerate pure-noise case) or a vector whose
    lp and l2 norms are both of order one (enforced as [0.5, 2]).
    """

    w_star: np.ndarray = field(repr=False)
    sparsity: int
    p_norm: float
    l2_norm: float

    @classmethod
    def create(cls, w_star: np.ndarray, norm: NormSpec) -> "GroundTruth":
        w_star = np.asarray(w_star, dtype=np.float64).reshape(-1)
        p_norm = eval_norm(norm, w_star)
        l2_norm = float(np.linalg.norm(w_star))
        if p_norm > 0 and not (0.5 <= p_norm <= 2.0 and 0.5 <= l2_norm <= 2.0):
            raise ConfigurationError(
                f"ground truth norms (lp={p_norm:.3f}, l2={l2_norm:.3f}) are not of order one"
            )
        return cls(
            w_star=w_star,
            sparsity=int(np.count_nonzero(w_star)),
            p_norm=p_norm,
            l2_norm=l2_norm,
        )

    @property
    def is_zero(self) -> bool:
        return self.sparsity == 0


@dataclass(frozen=True)
class SignalProjection:
    coefficient: float
    parallel: np.ndarray = field(repr=False)
    orthogonal: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DecompositionReport:
    """Monte Carlo estimates of the MSE split; see the module docstring."""

    signal_error: Estimate
    orthogonal_error: Estimate
    structural_error: Estimate
    noise_error: Estimate
    mse: Estimate
    outer_samples: int
    inner_samples: int
    consistency_residual: float

    @property
    def consistency_tolerance(self) -> float:
        """Three propagated standard errors for the mse = sum identity."""
        return 3.0 * math.sqrt(
            self.mse.stderr**2 + self.structural_error.stderr**2 + self.noise_error.stderr**2
        )


@dataclass(frozen=True)
class HermiteCoefficients:
    """Estimated degree-1 Hermite coefficients of the noise-to-solution map.

    Row i of ``alpha`` estimates the coefficient vector of the i-th noise
    coordinate; in the population limit X alpha_i equals the i-th standard
    basis vector (each coefficient is itself an interpolator of a coordinate
    spike), and ``interp_residual`` tracks how far the estimate is from that.
    """

    alpha: np.ndarray = field(repr=False)  # (n, d)
    stderr_per_coordinate: np.ndarray = field(repr=False)  # (n, d)
    inner_samples: int
    interp_residual: np.ndarray  # (n,)
    interp_residual_stderr: np.ndarray  # (n,)


@dataclass(frozen=True)
class ConstrainedL2Profile:
    """Order statistics of the ball-constrained minimum-l2 interpolation norm
    over design draws; infeasible draws enter as +inf."""

    median: float
    lower_quartile: float
    upper_quartile: float
    infeasible_count: int
    samples_used: int


@dataclass(frozen=True)
class ReverseEfronSteinReport:
    lhs_noise_error: float
    rhs_bound: float
    slack: float
    satisfied: bool
    radius: float
    mean_norm: Estimate
    profile: ConstrainedL2Profile
    decomposition: DecompositionReport


@dataclass(frozen=True)
class AndersonGapReport:
    gap: Estimate
    ratio_to_xnorm2: float


def project_onto_signal(w: np.ndarray, w_star: np.ndarray) -> SignalProjection:
    """Euclidean projection of ``w`` onto the signal direction.

    Returns the scalar coefficient <w, w*> / ||w*||^2, the parallel component,
    and the orthogonal remainder (exactly orthogonal to w*).
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    w_star = np.asarray(w_star, dtype=np.float64).reshape(-1)
    denom = float(w_star @ w_star)
    if denom == 0.0:
        raise ConfigurationError("cannot project onto the zero vector")
    coefficient = float(w @ w_star) / denom
    parallel = coefficient * w_star
    return SignalProjection(coefficient=coefficient, parallel=parallel, orthogonal=w - parallel)


def _as_truth(truth, norm: NormSpec, d: int) -> GroundTruth:
    if truth is None:
        return GroundTruth.create(np.zeros(d), norm)
    if isinstance(truth, GroundTruth):
        return truth
    return GroundTruth.create(truth, norm)


def _outer_replicate(design_obj, norm, w_star, noise, inner_m, key, o, opts):
    """One outer replicate: draw or reuse a design, solve the inner noise
    batch, and return per-design split statistics.

    Returns (signal, orthogonal, noise_var, mse, inner_failures, inner_used).
    """
    if isinstance(design_obj, DesignSpec):
        X = sample_design(design_obj, derive_key(key, DESIGN_STREAM, o)).matrix
    else:
        X = design_obj
    n, d = X.shape
    signal_part = X @ w_star
    targets = np.empty((n, inner_m))
    for i in range(inner_m):
        targets[:, i] = signal_part + sample_noise(noise, n, derive_key(key, NOISE_STREAM, o, i))
    batch = solve_min_norm_batch(X, targets, norm, opts)
    ok = np.array([s == "converged" for s in batch.statuses])
    failures = int((~ok).sum())
    W = batch.weights[:, ok]
    m_ok = W.shape[1]
    if m_ok < 2:
        return None, None, None, None, failures, m_ok
    mean_w = W.mean(axis=1)
    deviations = W - mean_w[:, None]
    total_var = float((deviations * deviations).sum() / (m_ok - 1))
    star_sq = float(w_star @ w_star)
    if star_sq > 0:
        coeffs = (w_star @ W) / star_sq
        mean_coeff = float(coeffs.mean())
        par_var = float(coeffs.var(ddof=1)) * star_sq
        signal = (mean_coeff - 1.0) ** 2 * star_sq - par_var / m_ok
        orth_mean = mean_w - mean_coeff * w_star
        orthogonal = float(orth_mean @ orth_mean) - (total_var - par_var) / m_ok
    else:
        signal = 0.0
        orthogonal = float(mean_w @ mean_w) - total_var / m_ok
    diffs = W - w_star[:, None]
    mse = float((diffs * diffs).sum() / m_ok)
    return signal, orthogonal, total_var, mse, failures, m_ok


def _outer_replicate_task(design_obj, norm, w_star, noise, inner_m, key, o, opts):
    return _outer_replicate(design_obj, norm, w_star, noise, inner_m, key, o, opts)


def estimate_decomposition(design, norm: NormSpec, truth, noise: NoiseSpec,
                           outer_m: int, inner_m: int, key: StreamKey,
                           opts: SolverOptions | None = None, workers: int = 1) -> DecompositionReport:
    """Estimate the MSE split by a nested Monte Carlo loop.

    ``design`` may be a :class:`DesignSpec` (fresh design per outer replicate)
    or a fixed :class:`Design`/matrix (the outer loop then averages over noise
    batches only).  ``truth`` is a :class:`GroundTruth`, a plain vector, or
    ``None`` for the degenerate zero signal.  Outer replicates fan out across
    ``workers`` processes with schedule-independent streams.
    """
    if outer_m < 2 or inner_m < 2:
        raise ConfigurationError("need outer_m >= 2 and inner_m >= 2")
    opts = opts or SolverOptions()
    if isinstance(design, Design):
        design_obj = design.matrix
    elif isinstance(design, DesignSpec):
        design_obj = design
    else:
        design_obj = np.asarray(design, dtype=np.float64)
    d = design_obj.d if isinstance(design_obj, DesignSpec) else design_obj.shape[1]
    truth = _as_truth(truth, norm, d)
    args = [(design_obj, norm, truth.w_star, noise, inner_m, key, o, opts) for o in range(outer_m)]
    results = run_indexed(_outer_replicate_task, args, workers)

    failures = sum(r[4] for r in results)
    total = outer_m * inner_m
    if failures > FAILURE_BUDGET * total:
        raise EstimatorError(f"{failures}/{total} solver failures exceed the {FAILURE_BUDGET:.0%} budget")
    kept = [r for r in results if r[0] is not None]
    if len(kept) < 2:
        raise EstimatorError("fewer than two usable outer replicates")
    signal = mean_estimate(np.array([r[0] for r in kept]))
    orthogonal = mean_estimate(np.array([r[1] for r in kept]))
    structural = mean_estimate(np.array([r[0] + r[1] for r in kept]))
    noise_err = mean_estimate(np.array([r[2] for r in kept]))
    mse = mean_estimate(np.array([r[3] for r in kept]))
    residual = abs(mse.value - (structural.value + noise_err.value))
    return DecompositionReport(
        signal_error=signal,
        orthogonal_error=orthogonal,
        structural_error=structural,
        noise_error=noise_err,
        mse=mse,
        outer_samples=len(kept),
        inner_samples=inner_m,
        consistency_residual=residual,
    )


def estimate_hermite(design, norm: NormSpec, truth, inner_m: int, key: StreamKey,
                     opts: SolverOptions | None = None, response_map=None) -> HermiteCoefficients:
    """Estimate the degree-1 Hermite coefficients of the noise-to-solution map
    for a fixed design.

    For each replicate xi and each coordinate i, the solution is evaluated at
    the antithetic pair of targets whose i-th noise coordinate is +|xi_i| and
    -|xi_i|; the averaged difference, weighted by |xi_i| / 2, is unbiased for
    the coefficient of the first-degree Hermite polynomial in coordinate i.

    ``response_map`` replaces the solver by an arbitrary map from a matrix of
    target columns to solution columns (a probe hook: for a linear map its
    Hermite coefficients are exactly its columns).
    """
    if inner_m < 2:
        raise ConfigurationError("need inner_m >= 2")
    opts = opts or SolverOptions()
    X = design.matrix if isinstance(design, Design) else np.asarray(design, dtype=np.float64)
    n, d = X.shape
    truth = _as_truth(truth, norm, d)
    signal_part = X @ truth.w_star

    sum_a = np.zeros((n, d))
    sumsq_a = np.zeros((n, d))
    sum_z = np.zeros((n, n))
    sumsq_z = np.zeros((n, n))
    used = 0
    failures = 0
    for rep in range(inner_m):
        xi = derive_key(key, NOISE_STREAM, rep).generator().standard_normal(n)
        targets = np.empty((n, 2 * n))
        for i in range(n):
            plus = xi.copy()
            plus[i] = abs(xi[i])
            minus = xi.copy()
            minus[i] = -abs(xi[i])
            targets[:, 2 * i] = signal_part + plus
            targets[:, 2 * i + 1] = signal_part + minus
        if response_map is not None:
            W = np.asarray(response_map(targets), dtype=np.float64)
        else:
            batch = solve_min_norm_batch(X, targets, norm, opts)
            if any(s != "converged" for s in batch.statuses):
                failures += 1
                continue
            W = batch.weights
        contrib = (np.abs(xi)[:, None] / 2.0) * (W[:, 0::2] - W[:, 1::2]).T  # (n, d)
        sum_a += contrib
        sumsq_a += contrib**2
        z = contrib @ X.T  # (n, n) rows are X alpha_i contributions
        sum_z += z
        sumsq_z += z**2
        used += 1
    if failures > FAILURE_BUDGET * inner_m:
        raise EstimatorError(f"{failures}/{inner_m} solver failures exceed the {FAILURE_BUDGET:.0%} budget")
    if used < 2:
        raise EstimatorError("fewer than two usable replicates")
    alpha = sum_a / used
    var_a = np.maximum(sumsq_a / used - alpha**2, 0.0) * used / (used - 1)
    stderr = np.sqrt(var_a / used)
    mean_z = sum_z / used
    var_z = np.maximum(sumsq_z / used - mean_z**2, 0.0) * used / (used - 1)
    resid = np.linalg.norm(mean_z - np.eye(n), axis=1)
    resid_stderr = np.sqrt(var_z.sum(axis=1) / used)
    return HermiteCoefficients(
        alpha=alpha,
        stderr_per_coordinate=stderr,
        inner_samples=used,
        interp_residual=resid,
        interp_residual_stderr=resid_stderr,
    )


def median_constrained_l2(design, v: np.ndarray, norm: NormSpec, radius: float,
                          outer_m: int, key: StreamKey,
                          opts: SolverOptions | None = None) -> ConstrainedL2Profile:
    """Median (and quartiles) over design draws of the smallest l2 norm among
    interpolators of ``v`` inside the lp ball of the given radius.

    Infeasible draws (radius below the achievable norm) contribute +inf to
    the order statistics; more than half infeasible raises
    :class:`UndefinedMedianError`.  A fixed design is allowed, in which case
    the statistics degenerate to that design's value.
    """
    if outer_m < 1:
        raise ConfigurationError("need outer_m >= 1")
    opts = opts or SolverOptions()
    values = np.empty(outer_m)
    infeasible = 0
    for o in range(outer_m):
        if isinstance(design, DesignSpec):
            X = sample_design(design, derive_key(key, DESIGN_STREAM, o)).matrix
        else:
            X = design.matrix if isinstance(design, Design) else np.asarray(design, dtype=np.float64)
        try:
            sol = solve_min_l2_in_ball(X, v, norm, radius, opts)
            values[o] = sol.l2_value
        except InfeasibleError:
            values[o] = math.inf
            infeasible += 1
    if infeasible > outer_m / 2:
        raise UndefinedMedianError(f"{infeasible}/{outer_m} infeasible draws; median undefined")
    lo, med, hi = np.quantile(values, [0.25, 0.5, 0.75])
    return ConstrainedL2Profile(
        median=float(med),
        lower_quartile=float(lo),
        upper_quartile=float(hi),
        infeasible_count=infeasible,
        samples_used=outer_m,
    )


def reverse_efron_stein_check(design, norm: NormSpec, truth, outer_m: int, inner_m: int,
                              key: StreamKey, *, constant: float = 1.0,
                              tolerance_factor: float = 1e-2,
                              noise: NoiseSpec | None = None,
                              psi_outer_m: int | None = None,
                              norm_samples: int | None = None,
                              opts: SolverOptions | None = None,
                              workers: int = 1) -> ReverseEfronSteinReport:
    """Directional check that the expected conditional variance dominates the
    spike-interpolation profile:

        noise_error  >=  tolerance_factor * n * psi(e_1, radius)^2,

    with radius = constant * K * mean_norm / (t sqrt(n)), where K is the
    K-convexity upper bound and t the cotype-2 constant of the norm.  The
    population inequality holds up to an unspecified absolute constant, which
    is why both ``constant`` and ``tolerance_factor`` are explicit knobs.
    """
    noise = noise or NoiseSpec("gaussian", 1.0)
    opts = opts or SolverOptions()
    decomposition = estimate_decomposition(design, norm, truth, noise, outer_m, inner_m, key, opts, workers)
    curvature = curvature_constants(norm)
    aux_key = derive_key(key, AUX_STREAM, 0)
    if isinstance(design, DesignSpec):
        n = design.n
    else:
        n = (design.matrix if isinstance(design, Design) else np.asarray(design)).shape[0]
    mean_norm = estimate_mean_norm(design, norm, norm_samples or max(outer_m, 32), aux_key, opts)
    radius = constant * curvature.kconvexity_upper * mean_norm.value / (curvature.cotype2_t * math.sqrt(n))
    e1 = np.zeros(n)
    e1[0] = 1.0
    profile = median_constrained_l2(design, e1, norm, radius, psi_outer_m or min(outer_m, 21),
                                    derive_key(key, AUX_STREAM, 1), opts)
    rhs = n * profile.median**2 if math.isfinite(profile.median) else math.inf
    lhs = decomposition.noise_error.value
    slack = lhs - tolerance_factor * rhs
    return ReverseEfronSteinReport(
        lhs_noise_error=lhs,
        rhs_bound=rhs,
        slack=slack,
        satisfied=bool(lhs >= tolerance_factor * rhs),
        radius=radius,
        mean_norm=mean_norm,
        profile=profile,
        decomposition=decomposition,
    )


def anderson_gap(norm: NormSpec, x: np.ndarray, d: int, m_samples: int, key: StreamKey) -> AndersonGapReport:
    """Monte Carlo estimate of E ||xi + x||^2 - E ||xi||^2 for standard
    gaussian noise, with common random numbers and antithetic pairs.

    The gap is nonnegative for any norm and symmetric log-concave noise; its
    ratio to ||x||^2 (in the same norm) witnesses quantitative curvature.
    With x = 0 the estimator is exactly zero.  Antithetic pairing cancels the
    odd linear term per draw, which removes most of the variance.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != d or norm.dimension != d:
        raise ConfigurationError("x, d, and the norm dimension must agree")
    pairs = max(1, (m_samples + 1) // 2)
    chunk = max(1, int(2_000_000 // max(d, 1)))
    vals = np.empty(pairs)
    done = 0
    cidx = 0
    p = norm.p
    while done < pairs:
        take = min(chunk, pairs - done)
        xi = derive_key(key, NOISE_STREAM, cidx).generator().standard_normal((take, d))
        plus = power_norm(xi + x, p, axis=1) ** 2
        minus = power_norm(-xi + x, p, axis=1) ** 2
        base = power_norm(xi, p, axis=1) ** 2
        vals[done : done + take] = 0.5 * (plus + minus) - base
        done += take
        cidx += 1
    gap = mean_estimate(vals)
    xnorm = eval_norm(norm, x)
    ratio = gap.value / xnorm**2 if xnorm > 0 else 0.0
    return AndersonGapReport(gap=gap, ratio_to_xnorm2=ratio)
