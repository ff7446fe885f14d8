"""Oracle and invariant checks behind ``coherent-usd validate``."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import analytics, montecarlo, qkd
from .analytics import closed_form, optimal_usd_prob
from .strategies import Scheme


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> Check:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failing check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return Check(name, bool(ok), detail, round(time.perf_counter() - t0, 3))


def poisson_mod_n(N: int, mu: float) -> list[float]:
    """Brute-force |c_k|^2 from log-space Poisson terms, truncated below 1e-16 relative."""
    out = [0.0] * N
    if mu == 0.0:
        out[0] = 1.0
        return out
    n = 0
    while True:
        term = math.exp(n * math.log(mu) - mu - math.lgamma(n + 1))
        out[n % N] += term
        if n > mu and n >= N and term < 1e-16 * min(out):
            return out
        n += 1


MU_GRID = (0.01, 0.1, 0.5, 1.0, 2.0, 5.0)
FINE_GRID = tuple(np.linspace(0.0, 5.0, 200))


def check_coefficients() -> tuple[bool, str]:
    worst = 0.0
    worst_sum = 0.0
    for N in range(2, 9):
        for mu in MU_GRID:
            vals = analytics.symmetric_coefficients(N, mu)
            ref = poisson_mod_n(N, mu)
            worst = max(worst, max(abs(a - b) for a, b in zip(vals, ref)))
            worst_sum = max(worst_sum, abs(float(np.sum(vals)) - 1.0))
    return worst <= 1e-10 and worst_sum <= 1e-12, f"max |diff|={worst:.2e}, max |sum-1|={worst_sum:.2e}"


_NAIVE = {
    "BS2": lambda x: 1 - math.exp(-2 * x),
    "BS3_SIMPLE": lambda x: (1 - math.exp(-x)) ** 2,
    "BS3_FEEDBACK": lambda x: 1 + 3 * math.exp(-2 * x) - 4 * math.exp(-1.5 * x),
    "BS4_SIMPLE": lambda x: (1 - math.exp(-x / 2)) ** 2 * (1 - math.exp(-x)),
    "BS4_FEEDBACK": lambda x: 1 + 3 * math.exp(-2 * x) + 2 * x * math.exp(-2 * x) - 4 * math.exp(-x),
    "BS4_P1": lambda x: 1 - math.exp(-2 * x),
    "BS4_P2": lambda x: 1 - math.exp(-2 * x) - 2 * x * math.exp(-2 * x),
    "POL4": lambda x: 1 - math.exp(-2 * x) * (math.sqrt(2) * math.sinh(math.sqrt(2) * x)
                                             + 2 * math.cosh(math.sqrt(2) * x) - 1),
}


def check_closed_forms() -> tuple[bool, str]:
    # the textbook expressions are accurate away from mu -> 0
    worst, where = 0.0, ""
    for name, f in _NAIVE.items():
        for mu in (0.5, 1.0, 2.0, 3.0):
            rel = abs(closed_form(name, mu) - f(mu)) / f(mu)
            if rel > worst:
                worst, where = rel, f"{name}@{mu}"
    return worst <= 1e-9, f"max rel diff={worst:.2e}" + (f" ({where})" if where else "")


def check_bs2_optimal() -> tuple[bool, str]:
    d = max(abs(closed_form("BS2", mu) - optimal_usd_prob(2, mu)) for mu in FINE_GRID)
    return d <= 1e-12, f"max |BS2 - optimal|={d:.2e}"


_BY_N = {
    2: ("BS2",),
    3: ("BS3_SIMPLE", "BS3_FEEDBACK"),
    4: ("BS4_SIMPLE", "BS4_FEEDBACK", "POL4"),
}


def check_dominance_monotonicity() -> tuple[bool, str]:
    problems = []
    for N, names in _BY_N.items():
        opt = [optimal_usd_prob(N, mu) for mu in FINE_GRID]
        for name in names:
            vals = [closed_form(name, mu) for mu in FINE_GRID]
            if any(v > o + 1e-12 for v, o in zip(vals, opt)):
                problems.append(f"{name} exceeds optimum")
            if any(b < a for a, b in zip(vals, vals[1:])):
                problems.append(f"{name} not monotone")
    for N, (s, f) in ((3, ("BS3_SIMPLE", "BS3_FEEDBACK")), (4, ("BS4_SIMPLE", "BS4_FEEDBACK"))):
        if any(closed_form(f, mu) < closed_form(s, mu) for mu in FINE_GRID if mu <= 1.0):
            problems.append(f"{f} below {s} for mu <= 1")
    return not problems, "; ".join(problems) or "ok"


def check_factor_four() -> tuple[bool, str]:
    mu = 1e-2
    ratio = closed_form("BS4_P2", mu) / analytics.multiphoton_prob(mu)
    return abs(ratio / 4.0 - 1.0) <= 0.01, f"ratio={ratio:.6f}"


def check_small_mu() -> tuple[bool, str]:
    mu = 1e-2
    parts = []
    ok = True
    for N in (3, 4):
        r1 = analytics.feedback_finite_M(N, mu, 10_000) / analytics.asymptotic("OPTIMAL", N, mu)
        r2 = analytics.bsn_simple(N, mu) / analytics.asymptotic("BSN_SIMPLE", N, mu)
        ok &= 0.9 <= r1 <= 1.1 and 0.9 <= r2 <= 1.1
        parts.append(f"N={N}: feedback {r1:.4f}, simple {r2:.4f}")
    return ok, "; ".join(parts)


def check_pol4() -> tuple[bool, str]:
    v = closed_form("POL4", 1.0)
    ref = _NAIVE["POL4"](1.0)
    below = all(closed_form("POL4", mu) <= optimal_usd_prob(4, mu) + 1e-12 for mu in FINE_GRID)
    return abs(v - ref) <= 1e-9 and below, f"POL4(1)={v:.9f}, below optimum: {below}"


_SOUNDNESS_RUNS = (
    (Scheme.BASIS2, 2), (Scheme.SIMPLE, 3), (Scheme.SIMPLE, 4), (Scheme.FEEDBACK, 3),
    (Scheme.FEEDBACK, 4), (Scheme.FEEDBACK_GENERAL, 5),
)


def check_soundness(trials_per_run: int, seed: int = 11) -> tuple[bool, str]:
    total = bad = wrong = 0
    for i, (scheme, N) in enumerate(_SOUNDNESS_RUNS):
        t = montecarlo.tally(scheme, N, 1.0, M=200, trials=trials_per_run, seed=seed + i)
        total += t.trials
        bad += t.violations
        wrong += t.wrong_conclusive
    return bad == 0 and wrong == 0, f"{bad} true-phase eliminations, {wrong} wrong conclusions in {total} trials"


_MC_RUNS = (
    (Scheme.SIMPLE, 3), (Scheme.FEEDBACK, 3), (Scheme.SIMPLE, 4), (Scheme.FEEDBACK, 4),
    (Scheme.FEEDBACK_GENERAL, 5),
)


def check_monte_carlo(trials: int, M: int = 1000, seed: int = 2024) -> tuple[bool, str]:
    fails = []
    for i, (scheme, N) in enumerate(_MC_RUNS):
        for j, mu in enumerate((0.25, 1.0)):
            est = montecarlo.estimate(scheme, N, mu, M=M, trials=trials, seed=seed + 10 * i + j)
            cmp = montecarlo.compare_to_analytic(est, montecarlo.analytic_value(scheme, N, mu), 5.0 / M)
            if not cmp.passed:
                fails.append(f"{scheme.value} N={N} mu={mu}: z={cmp.z_score:.2f}")
    return not fails, "; ".join(fails) or "all within 4 sigma + 5/M"


def check_bb84(pulses: int, M: int = 1000, seed: int = 7) -> tuple[bool, str]:
    s = qkd.run_session(pulses, 1.0, M=M, seed=seed)
    bias = 5.0 / M
    targets = {1: -math.expm1(-2.0), 2: closed_form("BS4_P2", 1.0), 3: closed_form("BS4_FEEDBACK", 1.0)}
    fails = []
    for k, p in targets.items():
        f = s.stage_fraction(k)
        if abs(f - p) > 4 * math.sqrt(p * (1 - p) / pulses) + bias:
            fails.append(f"stage>={k}: {f:.5f} vs {p:.5f}")
    n2 = s.stage_counts[2]
    if abs(s.coincidence_fraction - 0.5) > 4 * math.sqrt(0.25 / max(n2, 1)):
        fails.append(f"coincidence {s.coincidence_fraction:.4f}")
    if s.errors:
        fails.append(f"{s.errors} key errors")
    return not fails, "; ".join(fails) or f"qber=0, coincidence={s.coincidence_fraction:.4f}"


def check_eta_substitution(trials: int = 2000, seed: int = 5) -> tuple[bool, str]:
    fails = []
    for scheme, N in _SOUNDNESS_RUNS:
        a = montecarlo.tally(scheme, N, 1.2, eta=0.25, M=200, trials=trials, seed=seed)
        b = montecarlo.tally(scheme, N, 0.25 * 1.2, eta=1.0, M=200, trials=trials, seed=seed)
        if a != b:
            fails.append(f"{scheme.value} N={N}")
    return not fails, "; ".join(fails) or "identical tallies"


def run_profile(profile: str) -> list[Check]:
    checks = [
        _timed("coefficient_oracle", check_coefficients),
        _timed("closed_form_oracle", check_closed_forms),
        _timed("bs2_optimal", check_bs2_optimal),
        _timed("dominance_monotonicity_ordering", check_dominance_monotonicity),
        _timed("factor_four", check_factor_four),
        _timed("small_mu_optimality", check_small_mu),
        _timed("polarization_curve", check_pol4),
    ]
    if profile == "quick":
        checks.append(_timed("soundness", lambda: check_soundness(10_000)))
        return checks
    if profile != "full":
        raise ValueError(f"unknown profile {profile!r}")
    checks += [
        _timed("soundness", lambda: check_soundness(170_000)),
        _timed("monte_carlo_agreement", lambda: check_monte_carlo(100_000)),
        _timed("bb84_statistics", lambda: check_bb84(100_000)),
        _timed("eta_substitution", check_eta_substitution),
    ]
    return checks
