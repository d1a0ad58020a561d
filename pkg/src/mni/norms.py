"""Norm evaluation, duality, and curvature predicates for lp geometry.

The solvers only accept exponents p in (1, 2]; evaluation routines accept any
p in (1, inf) so that a norm and its conjugate can both be represented (the
conjugate exponent q = p/(p-1) lies in [2, inf) for solver-admissible p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .streams import StreamKey

# Additive slack absorbing floating-point error in convexity/smoothness
# predicates; the underlying inequalities are exact in real arithmetic.
PREDICATE_SLACK = 1e-12


@dataclass(frozen=True)
class NormSpec:
    """An lp norm on R^d; ``euclidean`` is an alias for lp(2)."""

    kind: str
    p: float
    dimension: int

    def __post_init__(self):
        if self.kind not in ("lp", "euclidean"):
            raise ConfigurationError(f"unknown norm kind {self.kind!r}")
        if self.dimension < 1:
            raise ConfigurationError("dimension must be >= 1")
        if not (1.0 < self.p < math.inf):
            raise ConfigurationError(f"p must lie in (1, inf), got {self.p}")
        if self.kind == "euclidean" and self.p != 2.0:
            raise ConfigurationError("euclidean norm must have p = 2")

    @property
    def q(self) -> float:
        """Conjugate exponent, 1/p + 1/q = 1."""
        return self.p / (self.p - 1.0)

    @property
    def solver_admissible(self) -> bool:
        """Solvers require p in (1, 2] (smooth concave dual)."""
        return self.p <= 2.0

    def dual(self) -> "NormSpec":
        return lp(self.q, self.dimension)


def lp(p: float, dimension: int) -> NormSpec:
    return NormSpec(kind="lp", p=float(p), dimension=dimension)


def euclidean(dimension: int) -> NormSpec:
    return NormSpec(kind="euclidean", p=2.0, dimension=dimension)


@dataclass(frozen=True)
class CurvatureConstants:
    """Curvature data of an lp norm, p in (1, 2].

    ``uc2_t`` is the 2-uniform-convexity constant p-1; (``usp_p``, ``usp_s``)
    the uniform-smoothness exponent and constant (p, 1); ``cotype2_t`` the
    cotype-2 constant, which is dimension-free for these norms and fixed here
    to 1 (empirical ratios are available via :func:`cotype2_ratio`);
    ``kconvexity_upper`` the bound min{(p-1)^(-1/2), sqrt(log d)}.
    """

    uc2_t: float
    usp_p: float
    usp_s: float
    cotype2_t: float
    kconvexity_upper: float


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class CotypeRatio:
    lhs_sum: float
    rhs_estimate: float
    ratio: float


def _check_dim(spec: NormSpec, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (spec.dimension,):
        raise ConfigurationError(
            f"vector of shape {w.shape} does not match norm dimension {spec.dimension}"
        )
    return w


def power_norm(values: np.ndarray, exponent: float, axis=None) -> np.ndarray:
    """(sum |v|^e)^(1/e) with max-scaling so large exponents cannot overflow."""
    a = np.abs(values)
    peak = np.max(a, axis=axis, keepdims=True)
    safe_peak = np.where(peak > 0, peak, 1.0)
    out = safe_peak * np.power(np.power(a / safe_peak, exponent).sum(axis=axis, keepdims=True), 1.0 / exponent)
    out = np.where(peak > 0, out, 0.0)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def eval_norm(spec: NormSpec, w: np.ndarray) -> float:
    """lp norm of ``w``."""
    w = _check_dim(spec, w)
    if spec.p == 2.0:
        return float(np.linalg.norm(w))
    return float(power_norm(w, spec.p))


def eval_dual_norm(spec: NormSpec, v: np.ndarray) -> float:
    """Dual (lq) norm of ``v``: the support function of the unit lp ball."""
    v = _check_dim(spec, v)
    if spec.p == 2.0:
        return float(np.linalg.norm(v))
    return float(power_norm(v, spec.q))


def dual_witness(spec: NormSpec, v: np.ndarray) -> np.ndarray:
    """Unit-lp-norm vector w with <w, v> = dual norm of v (Holder equality).

    For lp the witness is w_i proportional to sign(v_i) |v_i|^(q-1).
    """
    v = _check_dim(spec, v)
    dual_value = eval_dual_norm(spec, v)
    if dual_value == 0.0:
        raise ConfigurationError("dual witness of the zero vector is undefined")
    q = spec.q
    scaled = v / dual_value
    w = np.sign(scaled) * np.abs(scaled) ** (q - 1.0)
    return w


def check_uniform_convexity(spec: NormSpec, f: np.ndarray, g: np.ndarray, t: float) -> InequalityCheck:
    """Two-point test of 2-uniform convexity with constant ``t``:

        ||(f+g)/2||^2 + t ||(f-g)/2||^2  <=  (||f||^2 + ||g||^2) / 2.

    lp with p in (1, 2] satisfies this for t = p - 1; inner-product norms give
    equality at t = 1 (parallelogram law).
    """
    f = _check_dim(spec, f)
    g = _check_dim(spec, g)
    lhs = eval_norm(spec, (f + g) / 2.0) ** 2 + t * eval_norm(spec, (f - g) / 2.0) ** 2
    rhs = (eval_norm(spec, f) ** 2 + eval_norm(spec, g) ** 2) / 2.0
    return InequalityCheck(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + PREDICATE_SLACK))


def check_uniform_smoothness(spec: NormSpec, f: np.ndarray, g: np.ndarray, p_s: float, s: float) -> InequalityCheck:
    """Two-point test of p_s-uniform smoothness with constant ``s``:

        ||(f+g)/2||^p_s + s ||(f-g)/2||^p_s  >=  (||f||^p_s + ||g||^p_s) / 2.

    lp with p in (1, 2] satisfies this for p_s = p, s = 1.
    """
    if not (1.0 < p_s <= 2.0):
        raise ConfigurationError("smoothness exponent must lie in (1, 2]")
    if not s > 0:
        raise ConfigurationError("smoothness constant must be positive")
    f = _check_dim(spec, f)
    g = _check_dim(spec, g)
    lhs = eval_norm(spec, (f + g) / 2.0) ** p_s + s * eval_norm(spec, (f - g) / 2.0) ** p_s
    rhs = (eval_norm(spec, f) ** p_s + eval_norm(spec, g) ** p_s) / 2.0
    return InequalityCheck(lhs=lhs, rhs=rhs, holds=bool(lhs >= rhs - PREDICATE_SLACK))


def cotype2_ratio(spec: NormSpec, vectors: np.ndarray, num_sign_samples: int, key: StreamKey) -> CotypeRatio:
    """Empirical cotype-2 witness for a family of vectors.

    Returns sum_i ||f_i||^2, a Monte Carlo estimate of E_eps ||sum eps_i f_i||^2
    over i.i.d. signs, and their ratio (a lower-bound witness for the squared
    cotype-2 constant).

    Parameters
    ----------
    vectors : array of shape (m, d), one vector per row.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != spec.dimension:
        raise ConfigurationError("vectors must have shape (m, dimension)")
    m = vectors.shape[0]
    if m < 1 or num_sign_samples < 1:
        raise ConfigurationError("need m >= 1 and num_sign_samples >= 1")
    lhs_sum = float(sum(eval_norm(spec, vectors[i]) ** 2 for i in range(m)))
    rng = key.generator()
    signs = rng.integers(0, 2, size=(num_sign_samples, m)).astype(np.float64) * 2.0 - 1.0
    combos = signs @ vectors  # (samples, d)
    if spec.p == 2.0:
        values = np.linalg.norm(combos, axis=1)
    else:
        values = power_norm(combos, spec.p, axis=1)
    rhs = float(np.mean(values**2))
    return CotypeRatio(lhs_sum=lhs_sum, rhs_estimate=rhs, ratio=lhs_sum / rhs)


def curvature_constants(spec: NormSpec) -> CurvatureConstants:
    """Curvature constants of the norm; requires solver-admissible p."""
    if not spec.solver_admissible:
        raise ConfigurationError("curvature constants are tabulated for p in (1, 2] only")
    p = spec.p
    kconv = min((p - 1.0) ** -0.5, math.sqrt(max(math.log(spec.dimension), 0.0)))
    return CurvatureConstants(
        uc2_t=p - 1.0,
        usp_p=p,
        usp_s=1.0,
        cotype2_t=1.0,
        kconvexity_upper=kconv,
    )
