"""Monte Carlo estimation of receiver success rates and curve tables."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import analytics
from .analytics import PhaseAlphabet
from .errors import ParameterError
from .optics import RandomStream
from .strategies import FeedbackConfig, Scheme, TrueState, run_scheme

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class Tally:
    """Integer outcome counters; merging is plain addition, so order never matters."""

    trials: int = 0
    conclusive: int = 0
    stage_counts: tuple[int, ...] = ()
    violations: int = 0
    wrong_conclusive: int = 0

    def merge(self, other: Tally) -> Tally:
        n = max(len(self.stage_counts), len(other.stage_counts))
        a = self.stage_counts + (0,) * (n - len(self.stage_counts))
        b = other.stage_counts + (0,) * (n - len(other.stage_counts))
        return Tally(
            self.trials + other.trials,
            self.conclusive + other.conclusive,
            tuple(x + y for x, y in zip(a, b)),
            self.violations + other.violations,
            self.wrong_conclusive + other.wrong_conclusive,
        )


@dataclass(frozen=True)
class Estimate:
    successes: int
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError("an estimate needs at least one trial")

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    @property
    def stderr(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1.0 - p) / self.trials)

    def merge(self, other: Estimate) -> Estimate:
        return Estimate(self.successes + other.successes, self.trials + other.trials)


@dataclass(frozen=True)
class Comparison:
    passed: bool
    z_score: float
    p_hat: float
    stderr: float
    analytic: float
    bias_budget: float

    @property
    def band(self) -> float:
        return 4.0 * self.stderr + self.bias_budget


def run_trials(scheme: Scheme | str, alphabet: PhaseAlphabet, cfg: FeedbackConfig,
               seed: int, start: int, stop: int) -> Tally:
    """Run trials ``start .. stop-1``; trial i draws everything from substream i."""
    N = alphabet.N
    conclusive = violations = wrong = 0
    stages = [0] * N
    for i in range(start, stop):
        rng = RandomStream(seed, i)
        state = TrueState(rng.integers(N), alphabet)
        out = run_scheme(scheme, state, cfg, rng)
        stages[out.stage_reached] += 1
        if state.phase_index in out.eliminated:
            violations += 1
        if out.conclusive:
            conclusive += 1
            wrong += out.conclusive_index != state.phase_index
    return Tally(stop - start, conclusive, tuple(stages), violations, wrong)


def _chunks(trials: int, parts: int) -> list[tuple[int, int]]:
    size = -(-trials // parts)
    return [(a, min(a + size, trials)) for a in range(0, trials, size)]


def tally(scheme: Scheme | str, N: int, mu: float, eta: float = 1.0, M: int = 1000,
          trials: int = 100_000, seed: int = 0, workers: int = 1,
          basis_rule: str = "random") -> Tally:
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    scheme = Scheme(scheme)
    alphabet = PhaseAlphabet(N, mu, eta)
    cfg = FeedbackConfig(M=M, basis_rule=basis_rule)
    if workers <= 1:
        return run_trials(scheme, alphabet, cfg, seed, 0, trials)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_trials, scheme, alphabet, cfg, seed, a, b)
                   for a, b in _chunks(trials, workers)]
        result = Tally()
        for f in futures:
            result = result.merge(f.result())
    return result


def estimate(scheme: Scheme | str, N: int, mu: float, eta: float = 1.0, M: int = 1000,
             trials: int = 100_000, seed: int = 0, workers: int = 1) -> Estimate:
    """Fraction of conclusive trials, with its binomial standard error."""
    t = tally(scheme, N, mu, eta, M, trials, seed, workers)
    return Estimate(t.conclusive, t.trials)


def analytic_value(scheme: Scheme | str, N: int, mu: float) -> float:
    """M -> infinity success probability of ``scheme`` at effective intensity ``mu``."""
    scheme = Scheme(scheme)
    if scheme is Scheme.BASIS2:
        if N != 2:
            raise ParameterError("basis2 is defined for N = 2 only")
        return analytics.closed_form("BS2", mu)
    if scheme is Scheme.SIMPLE:
        named = {3: "BS3_SIMPLE", 4: "BS4_SIMPLE"}
        return analytics.closed_form(named[N], mu) if N in named else analytics.bsn_simple(N, mu)
    if scheme is Scheme.FEEDBACK and N == 4:
        return analytics.closed_form("BS4_FEEDBACK", mu)
    return analytics.feedback_limit(N, mu)


def compare_to_analytic(est: Estimate, analytic: float, bias_budget: float = 0.0) -> Comparison:
    """Pass iff |p_hat - analytic| <= 4 stderr + bias_budget."""
    if not 0.0 <= analytic <= 1.0:
        raise ParameterError(f"analytic value must lie in [0, 1], got {analytic}")
    if bias_budget < 0.0:
        raise ParameterError("bias budget must be >= 0")
    diff = est.p_hat - analytic
    if est.stderr > 0.0:
        z = diff / est.stderr
    else:
        z = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    passed = abs(diff) <= 4.0 * est.stderr + bias_budget
    return Comparison(passed, z, est.p_hat, est.stderr, analytic, bias_budget)


# ---------------------------------------------------------------------------
# Curve tables


@dataclass
class CurveTable:
    columns: list[str]
    rows: list[list[float]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        mus = [r[0] for r in self.rows]
        if any(b <= a for a, b in zip(mus, mus[1:])):
            raise ParameterError("mu must be strictly increasing")
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ParameterError("row width does not match the header")

    def column(self, name: str) -> list[float]:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([f"{v:.12g}" for v in r])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "metadata": self.metadata,
            "columns": self.columns,
            "rows": self.rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _analytic_curves(N: int, mu: float) -> dict[str, float]:
    cols = {"p_optimal": analytics.optimal_usd_prob(N, mu)}
    cols["p_simple_analytic"] = analytic_value(Scheme.SIMPLE, N, mu)
    cols["p_feedback_analytic"] = analytic_value(Scheme.FEEDBACK, N, mu)
    if N == 4:
        cols["p_pol_analytic"] = analytics.closed_form("POL4", mu)
    return cols


def sweep(N: int, schemes: list[str], mu_grid: list[float], eta: float = 1.0, M: int = 1000,
          trials: int = 0, seed: int = 0, workers: int = 1) -> CurveTable:
    """Analytic curves, plus Monte Carlo columns for each scheme in ``schemes``.

    ``schemes`` may contain "simple" and "feedback". Analytic columns are
    evaluated at the effective intensity eta * mu.
    """
    if not mu_grid:
        raise ParameterError("the mu grid is empty")
    if N > analytics.MAX_FEEDBACK_N:
        raise ParameterError(f"curves support N <= {analytics.MAX_FEEDBACK_N}")
    mc = [s for s in ("simple", "feedback") if s in schemes] if trials > 0 else []
    unknown = set(schemes) - {"simple", "feedback"}
    if unknown:
        raise ParameterError(f"unknown curve schemes {sorted(unknown)}")
    columns = ["mu"] + list(_analytic_curves(N, 0.0))
    for s in mc:
        columns += [f"p_{s}_mc", f"p_{s}_mc_stderr"]
    rows = []
    for i, mu in enumerate(mu_grid):
        row = [float(mu)] + list(_analytic_curves(N, eta * mu).values())
        for j, s in enumerate(mc):
            # each grid point and scheme gets its own seed
            est = estimate(s, N, mu, eta, M, trials, seed + 1_000_003 * (i * 2 + j), workers)
            row += [est.p_hat, est.stderr]
        rows.append(row)
    meta = {"N": N, "M": M, "trials": trials, "seed": seed, "eta": eta,
            "schema_version": SCHEMA_VERSION}
    return CurveTable(columns, rows, meta)
