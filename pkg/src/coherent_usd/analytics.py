"""Closed-form success probabilities for USD of symmetric coherent states.

All functions take the mean photon number ``mu = |alpha|^2`` of the signal.
Detector efficiency enters only through the substitution mu -> eta * mu.
"""

from __future__ import annotations

import cmath
import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

from .errors import NumericalHealthWarning, ParameterError

# Below this intensity the cancelling closed forms are summed as Taylor series.
SERIES_CUTOFF = 0.1
_SERIES_TERMS = 40
# Above this intensity symmetric_coefficients uses the discrete Fourier form.
_DFT_CUTOFF = 1.0
_CLAMP_WARN = 1e-9

MAX_FEEDBACK_N = 6


@dataclass(frozen=True)
class PhaseAlphabet:
    """N coherent states |alpha exp(2 pi i k / N)> with mean photon number mu."""

    N: int
    mu: float
    eta: float = 1.0

    def __post_init__(self):
        if self.N < 2:
            raise ParameterError(f"N must be >= 2, got {self.N}")
        if not (self.mu >= 0.0 and math.isfinite(self.mu)):
            raise ParameterError(f"mu must be finite and >= 0, got {self.mu}")
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must lie in [0, 1], got {self.eta}")

    @property
    def effective_mu(self) -> float:
        return self.eta * self.mu

    def phase(self, k: int) -> float:
        return 2.0 * math.pi * k / self.N

    def phasor(self, k: int) -> complex:
        return phasor(self.N, k)

    def chord2(self, j: int, k: int) -> float:
        """|exp(i phi_j) - exp(i phi_k)|^2."""
        return chord2(self.N, j, k)


_QUARTER_TURNS = (1 + 0j, 1j, -1 + 0j, -1j)


def phasor(N: int, k: int) -> complex:
    """exp(2 pi i k / N), exact at quarter turns and odd under k -> k + N/2.

    Exactness makes a reference tuned to the true phase cancel the signal to
    an exact zero, so the true phase can never be eliminated.
    """
    k %= N
    if N % 2 == 0 and k >= N // 2:
        return -phasor(N, k - N // 2)
    if (4 * k) % N == 0:
        return _QUARTER_TURNS[4 * k // N]
    return cmath.exp(2j * math.pi * k / N)


def chord2(N: int, j: int, k: int) -> float:
    d = (j - k) % N
    if d == 0:
        return 0.0
    # 2 - 2 cos x = 4 sin^2(x/2), exact zero off the diagonal is not needed
    return 4.0 * math.sin(math.pi * d / N) ** 2


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not (mu >= 0.0 and math.isfinite(mu)):
        raise ParameterError(f"mu must be finite and >= 0, got {mu}")
    return mu


def _clamp(p: float) -> float:
    if p < -_CLAMP_WARN or p > 1.0 + _CLAMP_WARN:
        warnings.warn(f"probability {p!r} clamped to [0, 1]", NumericalHealthWarning, stacklevel=3)
    return min(1.0, max(0.0, p))


# ---------------------------------------------------------------------------
# Optimal USD


def _coefficients_dft(N: int, mu: float) -> np.ndarray:
    j = np.arange(N)
    omega = np.exp(2j * np.pi * j / N)
    g = np.exp(mu * (omega - 1.0))
    k = j[:, None]
    vals = (np.exp(-2j * np.pi * k * j[None, :] / N) @ g).real / N
    return vals


def _coefficients_series(N: int, mu: float) -> np.ndarray:
    # only used for mu <= 1, where 40 terms past n = N exhaust every residue class
    vals = np.zeros(N)
    term = math.exp(-mu)
    for n in range(N + 40):
        vals[n % N] += term
        term *= mu / (n + 1)
    return vals


def symmetric_coefficients(N: int, mu: float) -> np.ndarray:
    """Weights |c_k|^2 of the photon-number classes n = k (mod N).

    Large ``mu`` uses the discrete Fourier sum over exp(mu (w^j - 1)); small
    ``mu`` sums the Poisson distribution by residue, which avoids the
    cancellation that makes the Fourier form lose the tiny coefficients.
    """
    if N < 2:
        raise ParameterError(f"N must be >= 2, got {N}")
    mu = _check_mu(mu)
    if mu > _DFT_CUTOFF:
        vals = _coefficients_dft(N, mu)
    else:
        vals = _coefficients_series(N, mu)
    return np.clip(vals, 0.0, 1.0)


def optimal_usd_prob(N: int, mu: float) -> float:
    """Optimal USD success probability, N times the smallest |c_k|^2."""
    return _clamp(N * float(symmetric_coefficients(N, mu).min()))


def elimination_click_prob(mu: float, eta: float, dphi: float) -> float:
    """Click probability of a phase-elimination setup tuned dphi away from the truth."""
    mu = _check_mu(mu)
    return -math.expm1(-eta * mu * (2.0 - 2.0 * math.cos(dphi)))


# ---------------------------------------------------------------------------
# Closed forms
#
# Several closed forms are differences of exponentials that vanish like mu^k.
# Each is described by exact exponential-polynomial terms
# coef * x**power * exp(rate * x) with rational rates, so the Taylor
# coefficients can be built in exact arithmetic for the small-mu branch.


@dataclass(frozen=True)
class _ExpPoly:
    terms: tuple[tuple[Fraction, int, Fraction], ...]

    def direct(self, x: float) -> float:
        return sum(float(c) * x**p * math.exp(float(r) * x) for c, p, r in self.terms)

    @property
    def coefficients(self) -> list[Fraction]:
        out = [Fraction(0)] * _SERIES_TERMS
        for c, p, r in self.terms:
            fact = 1
            rpow = Fraction(1)
            for i in range(_SERIES_TERMS - p):
                if i:
                    fact *= i
                    rpow *= r
                out[p + i] += c * rpow / fact
        return out


def _series(coeffs: tuple[float, ...], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


F = Fraction
_BS3_FEEDBACK = _ExpPoly(((F(1), 0, F(0)), (F(3), 0, F(-2)), (F(-4), 0, F(-3, 2))))
_BS4_FEEDBACK = _ExpPoly(((F(1), 0, F(0)), (F(3), 0, F(-2)), (F(2), 1, F(-2)), (F(-4), 0, F(-1))))
_BS4_P2 = _ExpPoly(((F(1), 0, F(0)), (F(-1), 0, F(-2)), (F(-2), 1, F(-2))))
_LOW_PHOTON_COUNT = _ExpPoly(((F(1), 0, F(0)), (F(-1), 0, F(-1)), (F(-1), 1, F(-1))))


@lru_cache(maxsize=None)
def _series_coeffs(name: str) -> tuple[float, ...]:
    if name == "POL4":
        return tuple(float(c) for c in _pol4_coefficients())
    return tuple(float(c) for c in _EXPPOLY[name].coefficients)


def _pol4_coefficients() -> list[Fraction]:
    # 1 - exp(-2x) g(x), g = sqrt2 sinh(sqrt2 x) + 2 cosh(sqrt2 x) - 1 has
    # rational Taylor coefficients: 2^((n+1)/2)/n! for odd n, 2^(n/2+1)/n! for even n.
    g = []
    for n in range(_SERIES_TERMS):
        if n % 2:
            g.append(F(2 ** ((n + 1) // 2), math.factorial(n)))
        else:
            g.append(F(2 ** (n // 2 + 1), math.factorial(n)))
    g[0] -= 1
    e = [F((-2) ** n, math.factorial(n)) for n in range(_SERIES_TERMS)]
    out = []
    for n in range(_SERIES_TERMS):
        prod = sum(e[i] * g[n - i] for i in range(n + 1))
        out.append((1 if n == 0 else 0) - prod)
    return out


def _pol4_direct(x: float) -> float:
    s2 = math.sqrt(2.0)
    return 1.0 - math.exp(-2.0 * x) * (s2 * math.sinh(s2 * x) + 2.0 * math.cosh(s2 * x) - 1.0)


_EXPPOLY = {
    "BS3_FEEDBACK": _BS3_FEEDBACK,
    "BS4_FEEDBACK": _BS4_FEEDBACK,
    "BS4_P2": _BS4_P2,
    "LOW_PHOTON_COUNT": _LOW_PHOTON_COUNT,
}


def _cancelling(name: str, direct):
    def f(mu: float) -> float:
        if mu < SERIES_CUTOFF:
            return _series(_series_coeffs(name), mu)
        return direct(mu)

    return f


def _bs2(mu: float) -> float:
    return -math.expm1(-2.0 * mu)


def _bs3_simple(mu: float) -> float:
    return math.expm1(-mu) ** 2


def _bs4_simple(mu: float) -> float:
    return math.expm1(-mu / 2.0) ** 2 * -math.expm1(-mu)


def bs2a(mu: float, phi0: float, phi1: float) -> float:
    """Two-state USD of arbitrary phases by splitting into two elimination setups."""
    mu = _check_mu(mu)
    return _clamp(-math.expm1(-mu * abs(cmath.exp(1j * phi0) - cmath.exp(1j * phi1)) ** 2 / 2.0))


def bsn_simple(N: int, mu: float) -> float:
    """Split into N copies and run one elimination per phase; succeed if N-1 click."""
    if N < 2:
        raise ParameterError(f"N must be >= 2, got {N}")
    mu = _check_mu(mu)
    p = 1.0
    for k in range(1, N):
        p *= -math.expm1(-(mu / N) * chord2(N, k, 0))
    return _clamp(p)


_CLOSED_FORMS = {
    "BS2": _bs2,
    "BS3_SIMPLE": _bs3_simple,
    "BS3_FEEDBACK": _cancelling("BS3_FEEDBACK", _BS3_FEEDBACK.direct),
    "BS4_SIMPLE": _bs4_simple,
    "BS4_FEEDBACK": _cancelling("BS4_FEEDBACK", _BS4_FEEDBACK.direct),
    "BS4_P1": _bs2,
    "BS4_P2": _cancelling("BS4_P2", _BS4_P2.direct),
    "POL4": _cancelling("POL4", _pol4_direct),
}

SCHEMES = tuple(_CLOSED_FORMS) + ("BS2A", "BSN_SIMPLE")


def closed_form(scheme: str, mu: float, *, N: int | None = None,
                phi0: float | None = None, phi1: float | None = None) -> float:
    """Evaluate the named closed-form success probability at intensity ``mu``.

    ``BS2A`` needs ``phi0`` and ``phi1``; ``BSN_SIMPLE`` needs ``N``.
    """
    if scheme == "BS2A":
        if phi0 is None or phi1 is None:
            raise ParameterError("BS2A requires phi0 and phi1")
        return bs2a(mu, phi0, phi1)
    if scheme == "BSN_SIMPLE":
        if N is None:
            raise ParameterError("BSN_SIMPLE requires N")
        return bsn_simple(N, mu)
    try:
        f = _CLOSED_FORMS[scheme]
    except KeyError:
        raise ParameterError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}") from None
    return _clamp(f(_check_mu(mu)))


def multiphoton_prob(mu: float) -> float:
    """Probability that a Poisson(mu) pulse holds at least two photons."""
    mu = _check_mu(mu)
    return _clamp(_cancelling("LOW_PHOTON_COUNT", _LOW_PHOTON_COUNT.direct)(mu))


def asymptotic(scheme: str, N: int, mu: float) -> float:
    """Leading small-mu success probability of one of the named strategies."""
    if N < 2:
        raise ParameterError(f"N must be >= 2, got {N}")
    mu = _check_mu(mu)
    if scheme in ("OPTIMAL", "BSN_FEEDBACK"):
        return N * mu ** (N - 1) / math.factorial(N - 1)
    if scheme == "BSN_SIMPLE":
        return mu ** (N - 1) / float(N) ** (N - 3)
    raise ParameterError(f"unknown asymptotic scheme {scheme!r}")


# ---------------------------------------------------------------------------
# Finite-M feedback sums


def _check_feedback_args(N: int, mu: float, M: int) -> float:
    if not 2 <= N <= MAX_FEEDBACK_N:
        raise ParameterError(f"feedback sums support 2 <= N <= {MAX_FEEDBACK_N}, got {N}")
    if M < N:
        raise ParameterError(f"need M >= N copies, got M={M}, N={N}")
    return _check_mu(mu)


def feedback_finite_M(N: int, mu: float, M: int, exact: bool = False) -> float:
    """Success probability of the general N-phase feedback scheme with M copies.

    Stage m tests every surviving phase with one copy of intensity mu/M per
    round. A round with no click costs ``exp(-mu A_rest / M)`` where A_rest is
    the summed squared chord distance of the uneliminated wrong phases; a
    click on wrong phase theta has weight ``1 - exp(-mu A_theta / M)``.

    With ``exact=True`` a round may instead eliminate any nonempty subset of
    the surviving wrong phases, each with its exact probability. That is the
    success probability of the event-level simulator; the default single-click
    weights match it to first order in mu/M and can exceed 1 when mu/M is large.

    The sum over all elimination orders and round counts is evaluated by
    dynamic programming over (uneliminated set, copies left). Along each
    residue class of copies the recurrence f(C) = q f(C - n) + g(C) is a
    first-order linear filter.
    """
    mu = _check_feedback_args(N, mu, M)
    if mu == 0.0:
        return 0.0
    A = {k: chord2(N, k, 0) for k in range(1, N)}
    click = {k: -math.expm1(-A[k] * mu / M) for k in A}
    dark = {k: math.exp(-A[k] * mu / M) for k in A}
    tables: dict[frozenset, np.ndarray] = {frozenset(): np.ones(M + 1)}
    for size in range(1, N):
        for S in map(frozenset, itertools.combinations(sorted(A), size)):
            n = size + 1
            q = math.exp(-mu * sum(A[k] for k in S) / M)
            g = np.zeros(M + 1)
            if exact:
                for r in range(1, size + 1):
                    for T in itertools.combinations(sorted(S), r):
                        w = math.prod(click[k] for k in T) * math.prod(dark[k] for k in S - set(T))
                        g[n:] += w * tables[S - set(T)][: M + 1 - n]
            else:
                for k in S:
                    g[n:] += click[k] * tables[S - {k}][: M + 1 - n]
            # lay copies out as rows of n so each column is one residue class
            rows = -(-(M + 1) // n)
            padded = np.zeros(rows * n)
            padded[: M + 1] = g
            f = lfilter([1.0], [1.0, -q], padded.reshape(rows, n), axis=0).reshape(-1)
            tables[S] = f[: M + 1]
    return _clamp(float(tables[frozenset(A)][M]))


def feedback_limit(N: int, mu: float, M: int = 6000) -> float:
    """M -> infinity limit of :func:`feedback_finite_M`.

    Uses the exact closed form where one exists (N = 2, 3) and otherwise a
    Richardson step 2 f(2M) - f(M) that removes the O(1/M) bias.
    """
    mu = _check_feedback_args(N, mu, M)
    if N == 2:
        return _bs2(mu)
    if N == 3:
        return closed_form("BS3_FEEDBACK", mu)
    return _clamp(2.0 * feedback_finite_M(N, mu, 2 * M) - feedback_finite_M(N, mu, M))


def bs4_feedback_finite_M(mu: float, M: int) -> float:
    """Finite-M success probability of the four-step BB84 receiver.

    Sums over the k+1 copies used to see the first photon in one basis and
    the m+1 copies used for the second in the other basis; the remaining
    M-k-m-2 copies feed two elimination setups, one of which sits at squared
    chord distance 2 from the truth.
    """
    mu = _check_mu(mu)
    if M < 3:
        raise ParameterError(f"need M >= 3 copies, got {M}")
    if mu == 0.0:
        return 0.0
    q = math.exp(-2.0 * mu / M)
    p = -math.expm1(-2.0 * mu / M)
    k = np.arange(M - 1, dtype=float)
    # inner geometric sum over m = 0 .. L with L = M - k - 2
    L1 = M - k - 1
    qr = math.exp(-mu / M)
    c = np.exp(-mu * (M - k - 2) / M)
    inner = -np.expm1(L1 * math.log(q)) - p * c * (-np.expm1(L1 * math.log(qr))) / (-math.expm1(-mu / M))
    total = float(np.sum(q**k * p * inner))
    return _clamp(total)


def bs4_p2_finite_M(mu: float, M: int) -> float:
    """Probability that the four-step receiver sees at least two photons with M copies."""
    mu = _check_mu(mu)
    if M < 2:
        raise ParameterError(f"need M >= 2 copies, got {M}")
    return _clamp(-math.expm1(-2.0 * mu) - M * math.exp(-2.0 * mu) * math.expm1(2.0 * mu / M))
