"""Deterministic random streams for designs and noise.

Every draw in the toolkit is keyed by a :class:`StreamKey`, a triple
``(seed, stream_id, replicate_index)`` mapped through ``SeedSequence`` onto a
counter-based Philox generator.  The same key produces the same stream on any
machine and under any worker schedule, and distinct keys produce independent
streams, so Monte Carlo loops can fan out across processes without any shared
generator state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

_MASK32 = (1 << 32) - 1
_MASK64 = (1 << 64) - 1

# Role labels appended to stream_id by derive_key.  Nonzero so that role
# paths encode injectively in base 8 (estimators can nest without collisions).
DESIGN_STREAM = 1
NOISE_STREAM = 2
SIGN_STREAM = 3
DIRECTION_STREAM = 4
AUX_STREAM = 5

DISTRIBUTIONS = ("gaussian", "rademacher", "uniform_bounded")
SCALINGS = ("raw", "by_sqrt_d")


@dataclass(frozen=True)
class StreamKey:
    """Addresses one independent random stream.

    ``replicate_index`` is a free 64-bit slot; nested loops pack their indices
    into it with :meth:`pack` so that each (outer, inner) pair owns a stream.
    """

    seed: int
    stream_id: int = 0
    replicate_index: int = 0

    def generator(self) -> np.random.Generator:
        """Philox generator owned by this key (counter-based, fork-safe)."""
        entropy = (
            self.seed & _MASK64,
            self.stream_id & _MASK32,
            self.replicate_index & _MASK64,
        )
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def with_stream(self, stream_id: int) -> "StreamKey":
        return StreamKey(self.seed, stream_id, self.replicate_index)

    def with_replicate(self, replicate_index: int) -> "StreamKey":
        return StreamKey(self.seed, self.stream_id, replicate_index)

    @staticmethod
    def pack(*indices: int) -> int:
        """Pack nested loop indices into one 64-bit replicate index.

        The last index gets 32 bits, every earlier one 16 bits (at most three
        in total); out-of-range indices raise, which keeps collisions
        impossible rather than merely unlikely.
        """
        if not 1 <= len(indices) <= 3:
            raise ConfigurationError("pack takes one to three indices")
        packed = 0
        for idx in indices[:-1]:
            if not 0 <= idx < (1 << 16):
                raise ConfigurationError(f"index {idx} out of packable range [0, 65536)")
            packed = (packed << 16) | idx
        last = indices[-1]
        if not 0 <= last < (1 << 32):
            raise ConfigurationError(f"index {last} out of packable range [0, 2**32)")
        return (packed << 32) | last


@dataclass(frozen=True)
class DesignSpec:
    """Shape and law of a covariate matrix.

    All three distributions are isotropic with i.i.d. symmetric entries of
    unit variance under ``raw`` scaling; ``by_sqrt_d`` divides every entry by
    sqrt(d).  ``gamma`` is the pre-normalization bound of the bounded law.
    """

    n: int
    d: int
    distribution: str = "gaussian"
    scaling: str = "raw"
    gamma: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ConfigurationError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigurationError(f"unknown distribution {self.distribution!r}")
        if self.scaling not in SCALINGS:
            raise ConfigurationError(f"unknown scaling {self.scaling!r}")
        if self.distribution == "uniform_bounded" and not self.gamma > 0:
            raise ConfigurationError("uniform_bounded needs gamma > 0")


@dataclass(frozen=True)
class Design:
    """A realized covariate matrix together with its provenance."""

    matrix: np.ndarray = field(repr=False)
    spec: DesignSpec
    key: StreamKey

    def __post_init__(self):
        if self.matrix.shape != (self.spec.n, self.spec.d):
            raise ConfigurationError(
                f"matrix shape {self.matrix.shape} does not match spec ({self.spec.n}, {self.spec.d})"
            )

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def d(self) -> int:
        return self.spec.d


@dataclass(frozen=True)
class NoiseSpec:
    """Law of the observation noise: centered gaussian with variance
    ``sigma2``, or unit Rademacher signs."""

    kind: str = "gaussian"
    sigma2: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "rademacher"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma2 > 0:
            raise ConfigurationError("gaussian noise needs sigma2 > 0")


def derive_key(key: StreamKey, role: int, *indices: int) -> StreamKey:
    """Child key for one replicate of an estimator loop.

    The caller's ``stream_id`` acts as a namespace: roles are appended in base
    8 (so nested estimators derive disjoint streams), and ``replicate_index``
    becomes the leading slot of the packed loop indices.  Callers of nested
    estimators should therefore keep stream_id below 2**28 and
    replicate_index below 2**16.
    """
    if not 1 <= role <= 7:
        raise ConfigurationError("role must lie in [1, 7]")
    return StreamKey(key.seed, key.stream_id * 8 + role, StreamKey.pack(key.replicate_index, *indices))


def sample_design(spec: DesignSpec, key: StreamKey) -> Design:
    """Draw a covariate matrix from the named law.

    The base entries are drawn first (unit variance), then scaling is applied,
    so ``raw`` and ``by_sqrt_d`` designs with the same key share the same
    underlying entries.
    """
    rng = key.generator()
    shape = (spec.n, spec.d)
    if spec.distribution == "gaussian":
        matrix = rng.standard_normal(shape)
    elif spec.distribution == "rademacher":
        matrix = rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0
    else:  # uniform_bounded: uniform on [-gamma*sqrt(3), gamma*sqrt(3)], then unit variance
        half_width = spec.gamma * np.sqrt(3.0)
        matrix = rng.uniform(-half_width, half_width, size=shape) / spec.gamma
    if spec.scaling == "by_sqrt_d":
        matrix = matrix / np.sqrt(spec.d)
    return Design(matrix=matrix, spec=spec, key=key)


def sample_noise(noise: NoiseSpec, length: int, key: StreamKey) -> np.ndarray:
    """Draw an i.i.d. noise vector of the given length."""
    if length < 1:
        raise ConfigurationError("noise length must be >= 1")
    rng = key.generator()
    if noise.kind == "gaussian":
        return rng.standard_normal(length) * np.sqrt(noise.sigma2)
    return rng.integers(0, 2, size=length).astype(np.float64) * 2.0 - 1.0


def sample_noise_matrix(noise: NoiseSpec, length: int, keys: list[StreamKey]) -> np.ndarray:
    """Stack independent noise vectors as columns (length x len(keys)).

    Column j is exactly ``sample_noise(noise, length, keys[j])``, so batched
    and one-at-a-time evaluation agree bit for bit.
    """
    out = np.empty((length, len(keys)))
    for j, key in enumerate(keys):
        out[:, j] = sample_noise(noise, length, key)
    return out
