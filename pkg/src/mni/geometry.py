"""Monte Carlo estimators of convex-geometry functionals of the projected
norm ball, and block diagnostics of solver outputs.

The central object is the random set obtained by pushing the unit lp ball
through the design matrix.  Its gauge at a noise vector equals the norm of the
minimum-norm interpolator of that noise, so means of the gauge are estimated
by solving; the support function is the dual norm of X^T xi and needs no
solves.  Ratios of these quantities measure how balanced the projected body
is, and the localization radius measures how hard the body is truncated
before its mean gauge changes.

Each estimator accepts either a fixed :class:`Design` (or a plain matrix) or
a :class:`DesignSpec`; with a spec, a fresh design is drawn per sample, so
estimates average over the design law as well.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, EstimatorError
from .norms import NormSpec, eval_dual_norm, eval_norm, power_norm
from .solvers import SolverOptions, gauge_projected_truncated, solve_min_norm_batch
from .stats import Estimate, mean_estimate
from .streams import (
    DESIGN_STREAM,
    DIRECTION_STREAM,
    NOISE_STREAM,
    SIGN_STREAM,
    Design,
    DesignSpec,
    StreamKey,
    derive_key,
    sample_design,
)

logger = logging.getLogger(__name__)

# Budget on solver failures inside an estimator, as a fraction of samples.
FAILURE_BUDGET = 0.01
# Cap on n * d * batch for the stacked Newton Hessians (about 30 MB of fp64).
_CHUNK_FLOATS = 4_000_000


@dataclass(frozen=True)
class ComplexityReport:
    """Gauge/support-function means of one projected ball and their ratios.

    ``mean_norm`` and ``mean_dual_norm`` are gaussian-normalized (plain means
    over standard normal noise).  ``inv_inradius`` is the reciprocal of the
    best-found inner l2 radius, an optimistic (non-certified) value.
    ``balance_ratio`` is mean_norm * mean_dual_norm / n; the strong variant
    replaces the gauge mean by ``inv_inradius`` and puts the dual mean on the
    spherical normalization, mean_dual_norm / sqrt(n).
    """

    mean_norm: Estimate
    mean_dual_norm: Estimate
    inv_inradius: float
    gaussian_complexity: Estimate
    rademacher_complexity: Estimate
    balance_ratio: float
    strong_balance_ratio: float
    samples_used: int


@dataclass(frozen=True)
class InradiusEstimate:
    value: float
    certified: bool = False


@dataclass(frozen=True)
class DyadicBlock:
    """One magnitude-ranked coordinate block of a vector.

    ``direction`` has unit lp norm (zero vector for an empty block) and
    ``weight`` is the lp norm of the raw block, so weight * direction is the
    raw block.  ``l2_norm`` is the raw block's l2 norm, the quantity the
    envelope bounds.
    """

    size: int
    direction: np.ndarray = field(repr=False)
    weight: float
    l2_norm: float
    range_tag: str
    predicted_bound: float


@dataclass(frozen=True)
class DyadicProfile:
    """Decomposition of a vector into dyadic magnitude blocks plus a head of
    remaining small coordinates."""

    blocks: tuple
    head: np.ndarray = field(repr=False)
    p: float
    n_context: int

    def reassemble(self) -> np.ndarray:
        out = self.head.copy()
        for block in self.blocks:
            out = out + block.weight * block.direction
        return out

    def block_power_sum(self) -> float:
        return float(sum(b.weight**self.p for b in self.blocks))


@dataclass(frozen=True)
class InductiveBiasReport:
    noise_norm_mean: Estimate
    signal_norm: float
    ratio: float


def _gaussian_noise(key: StreamKey, n: int, m: int) -> np.ndarray:
    cols = np.empty((n, m))
    for j in range(m):
        cols[:, j] = derive_key(key, NOISE_STREAM, j).generator().standard_normal(n)
    return cols


def _solve_norm_values(X: np.ndarray, targets: np.ndarray, norm: NormSpec, opts) -> tuple[np.ndarray, int]:
    """Batched min-norm values for each target column; returns (values of the
    converged columns in order, failure count)."""
    n, d = X.shape
    m = targets.shape[1]
    chunk = max(1, int(_CHUNK_FLOATS // max(n * d, 1)))
    values, failures = [], 0
    for start in range(0, m, chunk):
        batch = solve_min_norm_batch(X, targets[:, start : start + chunk], norm, opts)
        ok = np.array([s == "converged" for s in batch.statuses])
        failures += int((~ok).sum())
        values.append(batch.norm_values[ok])
    return np.concatenate(values), failures


def _check_failures(failures: int, total: int, what: str) -> None:
    if failures:
        logger.warning("%s: %d/%d solver failures excluded", what, failures, total)
    if failures > FAILURE_BUDGET * total:
        raise EstimatorError(f"{what}: {failures}/{total} solver failures exceed the {FAILURE_BUDGET:.0%} budget")


def estimate_mean_norm(design, norm: NormSpec, m_samples: int, key: StreamKey, opts: SolverOptions | None = None) -> Estimate:
    """Mean interpolation norm of standard gaussian noise (the gauge mean of
    the projected ball).  Each sample solves one minimum-norm program; with a
    :class:`DesignSpec` a fresh design is drawn per sample."""
    if m_samples < 2:
        raise ConfigurationError("need at least two samples")
    opts = opts or SolverOptions()
    if isinstance(design, DesignSpec):
        values, failures = [], 0
        for j in range(m_samples):
            X = sample_design(design, derive_key(key, DESIGN_STREAM, j)).matrix
            xi = derive_key(key, NOISE_STREAM, j).generator().standard_normal(design.n)
            batch = solve_min_norm_batch(X, xi, norm, opts)
            if batch.statuses[0] == "converged":
                values.append(float(batch.norm_values[0]))
            else:
                failures += 1
        values = np.asarray(values)
    else:
        X = design.matrix if isinstance(design, Design) else np.asarray(design, dtype=np.float64)
        targets = _gaussian_noise(key, X.shape[0], m_samples)
        values, failures = _solve_norm_values(X, targets, norm, opts)
    _check_failures(failures, m_samples, "estimate_mean_norm")
    return mean_estimate(values)


def estimate_mean_dual_norm(design, norm: NormSpec, m_samples: int, key: StreamKey, randomizer: str = "gaussian") -> Estimate:
    """Mean dual norm of X^T xi (the support-function mean of the projected
    ball); no solves are required.  ``randomizer`` selects gaussian noise or
    Rademacher signs."""
    if m_samples < 2:
        raise ConfigurationError("need at least two samples")
    if randomizer not in ("gaussian", "rademacher"):
        raise ConfigurationError(f"unknown randomizer {randomizer!r}")

    stream = NOISE_STREAM if randomizer == "gaussian" else SIGN_STREAM

    def draws(rng, n):
        if randomizer == "gaussian":
            return rng.standard_normal(n)
        return rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0

    if isinstance(design, DesignSpec):
        values = np.empty(m_samples)
        for j in range(m_samples):
            X = sample_design(design, derive_key(key, DESIGN_STREAM, j)).matrix
            xi = draws(derive_key(key, stream, j).generator(), design.n)
            values[j] = eval_dual_norm(norm, X.T @ xi)
    else:
        X = design.matrix if isinstance(design, Design) else np.asarray(design, dtype=np.float64)
        n = X.shape[0]
        cols = np.empty((n, m_samples))
        for j in range(m_samples):
            cols[:, j] = draws(derive_key(key, stream, j).generator(), n)
        V = X.T @ cols
        q = norm.q
        values = np.linalg.norm(V, axis=0) if q == 2.0 else power_norm(V, q, axis=0)
    return mean_estimate(values)


def estimate_inradius(design, norm: NormSpec, multistarts: int, key: StreamKey) -> InradiusEstimate:
    """Best-found minimum of u -> ||X^T u||_q over the unit sphere, i.e. the
    inner l2 radius of the projected ball.

    Minimizing a norm over the sphere is nonconvex, so this is multistart
    projected gradient descent and the result is an upper bound on the true
    inradius (never certified).  Starts include the uniform direction, the
    first coordinate, and random directions from ``key``.
    """
    if multistarts < 1:
        raise ConfigurationError("need at least one start")
    X = design.matrix if isinstance(design, Design) else np.asarray(design, dtype=np.float64)
    n = X.shape[0]
    q = norm.q

    def value_grad(u):
        v = X.T @ u
        val = eval_dual_norm(norm, v)
        if val == 0.0:
            return 0.0, np.zeros(n)
        g = X @ (np.sign(v) * np.abs(v / val) ** (q - 1.0))
        return val, g

    starts = [np.ones(n) / math.sqrt(n), np.eye(n)[0]]
    rng_all = [derive_key(key, DIRECTION_STREAM, j).generator() for j in range(max(0, multistarts - len(starts)))]
    for rng in rng_all:
        u = rng.standard_normal(n)
        starts.append(u / np.linalg.norm(u))
    best = math.inf
    for u in starts[:max(multistarts, 2)]:
        u = u / np.linalg.norm(u)
        val, g = value_grad(u)
        for _ in range(500):
            tangent = g - (g @ u) * u
            tnorm = np.linalg.norm(tangent)
            if tnorm <= 1e-12 * max(val, 1e-300):
                break
            step = 0.5 * val / tnorm
            improved = False
            for _ in range(40):
                u_try = u - step * tangent / tnorm
                u_try /= np.linalg.norm(u_try)
                val_try, g_try = value_grad(u_try)
                if val_try < val - 1e-12 * val:
                    u, val, g = u_try, val_try, g_try
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
        best = min(best, val)
    return InradiusEstimate(value=float(best), certified=False)


def complexity_ratios(design, norm: NormSpec, m_samples: int, multistarts: int, key: StreamKey,
                      opts: SolverOptions | None = None) -> ComplexityReport:
    """Assemble the complexity functionals of one projected ball; see
    :class:`ComplexityReport` for the normalization of each field."""
    X = design.matrix if isinstance(design, Design) else np.asarray(design, dtype=np.float64)
    n = X.shape[0]
    mean_norm = estimate_mean_norm(X, norm, m_samples, key, opts)
    mean_dual = estimate_mean_dual_norm(X, norm, m_samples, key)
    rademacher = estimate_mean_dual_norm(X, norm, m_samples, key, randomizer="rademacher")
    inradius = estimate_inradius(X, norm, multistarts, key)
    b = 1.0 / inradius.value
    return ComplexityReport(
        mean_norm=mean_norm,
        mean_dual_norm=mean_dual,
        inv_inradius=b,
        gaussian_complexity=Estimate(mean_dual.value / n, mean_dual.stderr / n),
        rademacher_complexity=Estimate(rademacher.value / n, rademacher.stderr / n),
        balance_ratio=mean_norm.value * mean_dual.value / n,
        strong_balance_ratio=b * mean_dual.value / math.sqrt(n),
        samples_used=m_samples,
    )


def covering_scale(d: int, k: int, p: float) -> float:
    """Entropy scale of the normalized lp ball at covering level k: the l2
    radius at which the ball needs about exp(k) translates.

    Equals (d log(e d / k) / k)^(1/p - 1/2) for k >= log d and saturates at
    d^(1/p - 1/2) below; the log is regularized to log(e d / k) so the value
    at k = d is exactly 1.
    """
    if not 1 <= k <= d:
        raise ConfigurationError(f"need 1 <= k <= d, got k={k}, d={d}")
    if not 1.0 < p <= 2.0:
        raise ConfigurationError("p must lie in (1, 2]")
    exponent = 1.0 / p - 0.5
    if k < math.log(d):
        return d**exponent
    return (d * math.log(math.e * d / k) / k) ** exponent


def block_l2_envelope(d: int, k: int, p: float, regime: str = "gaussian") -> float:
    """Predicted ceiling for the l2 mass of the size-k magnitude block of a
    normalized minimum-norm interpolator:

        sqrt(k / d) * (log(e d / k) / loglog(e^2 d)) ** (1 / (2 (p - 1)))

    in the ``gaussian`` regime; the ``subgaussian`` regime drops the loglog
    denominator.  All constants are fixed to 1 and the logs are regularized
    (log(e d / k), log log(e^2 d)) so the expression stays positive down to
    k = d and small d.
    """
    if not 1 <= k <= d:
        raise ConfigurationError(f"need 1 <= k <= d, got k={k}, d={d}")
    if not 1.0 < p <= 2.0:
        raise ConfigurationError("p must lie in (1, 2]")
    if regime not in ("gaussian", "subgaussian"):
        raise ConfigurationError(f"unknown regime {regime!r}")
    base = math.sqrt(k / d)
    lg = math.log(math.e * d / k)
    exponent = 1.0 / (2.0 * (p - 1.0))
    if regime == "subgaussian":
        return base * lg**exponent
    loglog = math.log(2.0 + math.log(d))
    return base * (lg / loglog) ** exponent


def dyadic_profile(w: np.ndarray, p: float, n_context: int) -> DyadicProfile:
    """Split ``w`` into dyadic magnitude-ranked blocks plus a head.

    Block k collects the coordinates ranked (k/2, k] by absolute value (ties
    broken toward lower index), for dyadic k up to the largest power of two
    below d / log d; everything smaller lands in the head.  Blocks at or below
    n / log(d / n) in size are tagged ``R2`` (spike range), larger ones ``R1``
    (spread range).
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if not np.any(w):
        raise ConfigurationError("dyadic profile of the zero vector is undefined")
    if not 1.0 < p <= 2.0:
        raise ConfigurationError("p must lie in (1, 2]")
    d = w.shape[0]
    order = np.argsort(-np.abs(w), kind="stable")
    cap = max(int(d / max(math.log(d), 1.0)), 1)
    boundary = int(n_context / math.log(max(d / max(n_context, 1), math.e)))
    sizes = []
    k = 1
    while k <= cap:
        sizes.append(k)
        k *= 2
    blocks = []
    prev = 0
    for size in sizes:
        hi = min(size, d)
        idx = order[prev:hi]
        raw = np.zeros(d)
        raw[idx] = w[idx]
        weight = eval_norm_like(raw, p)
        direction = raw / weight if weight > 0 else raw
        blocks.append(
            DyadicBlock(
                size=size,
                direction=direction,
                weight=weight,
                l2_norm=float(np.linalg.norm(raw)),
                range_tag="R2" if size <= boundary else "R1",
                predicted_bound=block_l2_envelope(d, min(size, d), p),
            )
        )
        prev = hi
    head = np.zeros(d)
    tail_idx = order[prev:]
    head[tail_idx] = w[tail_idx]
    return DyadicProfile(blocks=tuple(blocks), head=head, p=p, n_context=n_context)


def eval_norm_like(v: np.ndarray, p: float) -> float:
    """lp norm without a NormSpec (used on scratch vectors of any length)."""
    if p == 2.0:
        return float(np.linalg.norm(v))
    return float(power_norm(v, p))


def estimate_localization_radius(design, norm: NormSpec, m_samples: int, key: StreamKey,
                                 factor: float = 0.5, opts: SolverOptions | None = None) -> float:
    """Smallest l2-truncation radius at which the truncated ball keeps the
    full ball's mean gauge up to the given factor.

    Truncating shrinks the projected set and therefore raises its gauge; the
    returned radius is where the mean truncated gauge crosses
    mean_norm / factor, found by bisection with common noise draws across all
    radii.  Larger factors demand a truncated mean closer to the full one and
    give larger radii.
    """
    if not 0.0 < factor <= 1.0:
        raise ConfigurationError("factor must lie in (0, 1]")
    opts = opts or SolverOptions()
    X = design.matrix if isinstance(design, Design) else np.asarray(design, dtype=np.float64)
    n = X.shape[0]
    noise = _gaussian_noise(key, n, m_samples)
    values, failures = _solve_norm_values(X, noise, norm, opts)
    _check_failures(failures, m_samples, "estimate_localization_radius")
    target = float(np.mean(values)) / factor

    def mean_gauge(r: float) -> float:
        vals = [gauge_projected_truncated(X, noise[:, j], norm, r, opts) for j in range(m_samples)]
        return float(np.mean(vals))

    r_hi = 1.0
    for _ in range(40):
        if mean_gauge(r_hi) <= target:
            break
        r_hi *= 4.0
        if r_hi > 1e8:
            raise EstimatorError("localization bisection failed to bracket from above")
    else:
        raise EstimatorError("localization bisection failed to bracket from above")
    r_lo = r_hi / 4.0
    for _ in range(40):
        if mean_gauge(r_lo) > target:
            break
        r_lo /= 4.0
        if r_lo < 1e-8:
            raise EstimatorError("localization bisection failed to bracket from below")
    else:
        raise EstimatorError("localization bisection failed to bracket from below")
    for _ in range(40):
        if r_hi / r_lo <= 1.01:
            break
        r_mid = math.sqrt(r_lo * r_hi)
        if mean_gauge(r_mid) <= target:
            r_hi = r_mid
        else:
            r_lo = r_mid
    return math.sqrt(r_lo * r_hi)


def check_inductive_bias(design, norm: NormSpec, w_star: np.ndarray, m_samples: int, key: StreamKey,
                         opts: SolverOptions | None = None) -> InductiveBiasReport:
    """Compare the norm needed to interpolate pure noise against the norm of
    the interpolator of the noiseless signal X w_star.

    A ratio above one says the norm is biased toward the signal: fitting
    noise is more expensive than fitting the ground truth.  The signal norm
    never exceeds ||w_star|| since w_star itself is feasible.
    """
    opts = opts or SolverOptions()
    X = design.matrix if isinstance(design, Design) else np.asarray(design, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64).reshape(-1)
    star_norm = eval_norm(norm, w_star)
    if not 0.5 <= star_norm <= 2.0:
        raise ConfigurationError(f"||w_star|| = {star_norm:.3f} is not of order one")
    noise = _gaussian_noise(key, X.shape[0], m_samples)
    values, failures = _solve_norm_values(X, noise, norm, opts)
    _check_failures(failures, m_samples, "check_inductive_bias")
    noise_mean = mean_estimate(values)
    signal = solve_min_norm_batch(X, X @ w_star, norm, opts).column(0)
    return InductiveBiasReport(
        noise_norm_mean=noise_mean,
        signal_norm=signal.norm_value,
        ratio=noise_mean.value / signal.norm_value,
    )
