"""Coherent-state linear optics with threshold photodetection.

A coherent state stays coherent under beamsplitters, displacements and
loss, so every mode here is carried as a single complex amplitude.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

_UNITARITY_TOL = 1e-12


def _check_finite(z: complex, what: str) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ParameterError(f"{what} must be finite, got {z!r}")
    return z


@dataclass(frozen=True)
class CoherentMode:
    """Single optical mode in the coherent state |amplitude>."""

    amplitude: complex

    def __post_init__(self):
        a = self.amplitude
        if type(a) is not complex:
            a = complex(a)
            object.__setattr__(self, "amplitude", a)
        if not (math.isfinite(a.real) and math.isfinite(a.imag)):
            raise ParameterError(f"amplitude must be finite, got {a!r}")

    @property
    def mean_photons(self) -> float:
        return abs(self.amplitude) ** 2


VACUUM = CoherentMode(0j)


@dataclass(frozen=True)
class Beamsplitter:
    """Symmetric lossless beamsplitter with transfer matrix [[t, r], [r, t]]."""

    t: complex
    r: complex

    def __post_init__(self):
        t = _check_finite(self.t, "t")
        r = _check_finite(self.r, "r")
        if abs(abs(t) ** 2 + abs(r) ** 2 - 1.0) > _UNITARITY_TOL:
            raise ParameterError(f"|t|^2 + |r|^2 must be 1, got {abs(t)**2 + abs(r)**2!r}")
        if abs(t * r.conjugate() + r * t.conjugate()) > _UNITARITY_TOL:
            raise ParameterError("t and r must be in quadrature for a unitary beamsplitter")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)

    @classmethod
    def balanced(cls) -> Beamsplitter:
        """50/50 splitter with t = 1/sqrt(2), r = i/sqrt(2)."""
        s = 1.0 / math.sqrt(2.0)
        return cls(s, 1j * s)

    @classmethod
    def with_transmissivity(cls, transmissivity: float) -> Beamsplitter:
        if not 0.0 <= transmissivity <= 1.0:
            raise ParameterError(f"transmissivity must lie in [0, 1], got {transmissivity}")
        return cls(math.sqrt(transmissivity), 1j * math.sqrt(1.0 - transmissivity))


@dataclass(frozen=True)
class Detector:
    """Threshold (click / no-click) photodetector."""

    efficiency: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ParameterError(f"detector efficiency must lie in [0, 1], got {self.efficiency}")


PERFECT_DETECTOR = Detector(1.0)


@dataclass
class RandomStream:
    """Reproducible random stream keyed by (seed, substream).

    Backed by numpy's PCG64 seeded through ``SeedSequence(seed,
    spawn_key=(substream,))``, so distinct substreams are independent and a
    given key yields the same draws on every platform.
    """

    seed: int
    substream: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.substream < 0:
            raise ParameterError("seed and substream must be non-negative")
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.substream,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self) -> float:
        return float(self._gen.random())

    def bernoulli(self, p: float) -> bool:
        return self._gen.random() < p

    def integers(self, high: int) -> int:
        """Uniform integer in [0, high)."""
        return min(int(self._gen.random() * high), high - 1)

    def geometric(self, p: float) -> int:
        """Number of trials up to and including the first success."""
        return int(self._gen.geometric(p))


def beamsplit(a: CoherentMode, b: CoherentMode, bs: Beamsplitter) -> tuple[CoherentMode, CoherentMode]:
    return (
        CoherentMode(bs.t * a.amplitude + bs.r * b.amplitude),
        CoherentMode(bs.r * a.amplitude + bs.t * b.amplitude),
    )


def displace(m: CoherentMode, delta: complex) -> CoherentMode:
    return CoherentMode(m.amplitude + _check_finite(delta, "displacement"))


def phase_shift(m: CoherentMode, theta: float) -> CoherentMode:
    return CoherentMode(m.amplitude * cmath.exp(1j * theta))


def attenuate(m: CoherentMode, transmission: float) -> CoherentMode:
    """Pure loss: amplitude scales by sqrt(transmission)."""
    if not 0.0 <= transmission <= 1.0:
        raise ParameterError(f"transmission must lie in [0, 1], got {transmission}")
    return CoherentMode(m.amplitude * math.sqrt(transmission))


def split_equal(m: CoherentMode, n: int) -> list[CoherentMode]:
    """Split ``m`` into ``n`` identical copies of amplitude m/sqrt(n)."""
    if n < 1:
        raise ParameterError(f"number of copies must be >= 1, got {n}")
    amp = m.amplitude / math.sqrt(n)
    return [CoherentMode(amp) for _ in range(n)]


def displace_via_beamsplitter(
    m: CoherentMode, delta: complex, transmissivity: float
) -> tuple[CoherentMode, CoherentMode]:
    """Approximate ``displace(m, delta)`` with a highly transmitting beamsplitter.

    The reference port carries t*delta/r so the kept output is t*(m + delta),
    which tends to the exact displacement as t -> 1. Returns
    ``(kept, discarded)``; the discarded port carries the reference light.
    """
    if not 0.0 < transmissivity < 1.0:
        raise ParameterError("transmissivity must lie strictly between 0 and 1")
    bs = Beamsplitter.with_transmissivity(transmissivity)
    ref = CoherentMode(bs.t * complex(delta) / bs.r)
    return beamsplit(m, ref, bs)


def click_probability(m: CoherentMode, d: Detector = PERFECT_DETECTOR) -> float:
    """Probability that a threshold detector fires on ``m``: 1 - exp(-eta |gamma|^2)."""
    return -math.expm1(-d.efficiency * m.mean_photons)


def sample_click(m: CoherentMode, d: Detector, rng: RandomStream) -> bool:
    """Bernoulli click draw. The mode is considered absorbed by the detector."""
    p = click_probability(m, d)
    if p <= 0.0:
        return False
    return rng.bernoulli(p)
