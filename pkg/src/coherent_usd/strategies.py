"""Event-level execution of the USD receivers.

Every receiver is a sequence of *stages*. In each round of a stage a fixed
set of setups (phase eliminations or two-output basis measurements) each
consume one weak copy of the signal; the stage ends at the first round in
which any detector fires, or when the copies run out.

Two execution paths produce identically distributed outcomes:

* the default path draws the number of rounds to the first click from a
  geometric law and then the set of detectors that fired in that round,
  conditioned on at least one click;
* the audit path pushes every copy through the optics primitives and draws
  each detector separately, recording the full click log.

Detector efficiency is folded into the signal intensity before anything is
simulated, so a run at (mu, eta) and one at (eta * mu, 1) consume random
numbers identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from enum import Enum
from typing import Callable, Optional

from .analytics import PhaseAlphabet
from .errors import ParameterError
from .optics import (
    PERFECT_DETECTOR,
    Beamsplitter,
    CoherentMode,
    RandomStream,
    beamsplit,
    displace,
    sample_click,
    split_equal,
)

BALANCED = Beamsplitter.balanced()


class Scheme(str, Enum):
    BASIS2 = "basis2"
    SIMPLE = "simple"
    FEEDBACK = "feedback"
    FEEDBACK_GENERAL = "feedback-general"


class BasisRule(str, Enum):
    RANDOM = "random"
    FIXED = "fixed"


@dataclass(frozen=True)
class TrueState:
    phase_index: int
    alphabet: PhaseAlphabet

    def __post_init__(self):
        if not 0 <= self.phase_index < self.alphabet.N:
            raise ParameterError(f"phase index {self.phase_index} outside [0, {self.alphabet.N})")


@dataclass(frozen=True)
class FeedbackConfig:
    M: int = 1000
    basis_rule: BasisRule = BasisRule.RANDOM
    audit: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise ParameterError(f"M must be positive, got {self.M}")
        object.__setattr__(self, "basis_rule", BasisRule(self.basis_rule))


@dataclass
class StrategyOutcome:
    N: int
    eliminated: frozenset = frozenset()
    copies_consumed: int = 0
    light_consumed: float = 0.0
    light_discarded: float = 0.0
    basis_order: Optional[tuple[int, int]] = None
    click_log: Optional[list[tuple[int, int, bool]]] = None

    @property
    def stage_reached(self) -> int:
        # every click removes a distinct phase, so this counts detected photons
        return len(self.eliminated)

    @property
    def conclusive_index(self) -> Optional[int]:
        if len(self.eliminated) != self.N - 1:
            return None
        (k,) = set(range(self.N)) - self.eliminated
        return k

    @property
    def conclusive(self) -> bool:
        return len(self.eliminated) == self.N - 1


# A setup turns one copy of the signal into labelled detector modes; a click
# on a mode labelled k proves the phase is not k.
Setup = Callable[[CoherentMode], list[tuple[int, CoherentMode]]]


def elimination_setup(alphabet: PhaseAlphabet, k: int, copy_amplitude: float) -> Setup:
    """Displace by the reference copy of phase k; the output is dark iff phi = phi_k."""
    ref = copy_amplitude * alphabet.phasor(k)

    def run(copy: CoherentMode) -> list[tuple[int, CoherentMode]]:
        return [(k, displace(copy, -ref))]

    return run


def basis_setup(alphabet: PhaseAlphabet, k: int, copy_amplitude: float) -> Setup:
    """Interfere with i * reference of phase k on a 50/50 splitter.

    Outputs are a (e^{i phi} - e^{i phi_k}) / sqrt2, eliminating phi_k, and
    i a (e^{i phi} + e^{i phi_k}) / sqrt2, eliminating the opposite phase.
    """
    if alphabet.N % 2:
        raise ParameterError("basis measurements need an even number of phases")
    ref = CoherentMode(1j * (copy_amplitude * alphabet.phasor(k)))
    opposite = (k + alphabet.N // 2) % alphabet.N

    def run(copy: CoherentMode) -> list[tuple[int, CoherentMode]]:
        out1, out2 = beamsplit(copy, ref, BALANCED)
        return [(k, out1), (opposite, out2)]

    return run


_SETUPS = {"eliminate": elimination_setup, "basis": basis_setup}


@lru_cache(maxsize=4096)
def _stage_exposures(alphabet: PhaseAlphabet, M: int, true_idx: int, kind: str,
                     tested: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Labels and mean photon numbers of every detector in one round of a stage."""
    amp = math.sqrt(alphabet.effective_mu / M)
    copy = CoherentMode(amp * alphabet.phasor(true_idx))
    outputs = [out for k in tested for out in _SETUPS[kind](alphabet, k, amp)(copy)]
    return tuple(k for k, _ in outputs), tuple(m.mean_photons for _, m in outputs)


class _Trial:
    """Bookkeeping for one run of a receiver on one signal pulse."""

    def __init__(self, state: TrueState, M: int, rng: RandomStream, audit: bool):
        self.state = state
        self.alphabet = state.alphabet
        self.mu = state.alphabet.effective_mu
        self.M = M
        self.rng = rng
        self.audit = audit
        self.copies_left = M
        self.round = 0
        self.eliminated: set[int] = set()
        self.consumed = 0.0
        self.log: Optional[list] = [] if audit else None
        self.true_phasor = self.alphabet.phasor(state.phase_index)
        self.copy_amplitude = math.sqrt(self.mu / M)

    def copy(self) -> CoherentMode:
        return CoherentMode(self.copy_amplitude * self.true_phasor)

    def run_stage(self, kind: str, tested: list[int]) -> bool:
        """Feed one copy per tested phase per round until a click. Returns True on a click."""
        n = len(tested)
        rounds_left = self.copies_left // n
        if rounds_left == 0:
            return False
        if self.audit:
            setups = [_SETUPS[kind](self.alphabet, k, self.copy_amplitude) for k in tested]
            return self._stage_audit(setups, rounds_left)
        labels, exposures = _stage_exposures(
            self.alphabet, self.M, self.state.phase_index, kind, tuple(tested))
        total = sum(exposures)
        if total == 0.0:
            self._spend(rounds_left * n)
            return False
        g = self.rng.geometric(-math.expm1(-total))
        if g > rounds_left:
            self._spend(rounds_left * n)
            return False
        self._spend(g * n)
        self.round += g
        for idx in self._clicked_given_any(exposures):
            self.eliminated.add(labels[idx])
        return True

    def _clicked_given_any(self, exposures: list[float]) -> list[int]:
        # draw detector j as the first to fire, then the later ones freely
        tail = [0.0] * (len(exposures) + 1)
        for j in range(len(exposures) - 1, -1, -1):
            tail[j] = tail[j + 1] + exposures[j]
        for j, x in enumerate(exposures):
            if x == 0.0:
                continue
            p_first = -math.expm1(-x) / -math.expm1(-tail[j])
            if self.rng.bernoulli(p_first):
                later = [i for i in range(j + 1, len(exposures))
                         if exposures[i] > 0.0 and self.rng.bernoulli(-math.expm1(-exposures[i]))]
                return [j] + later
        raise AssertionError("conditioned on a click, some detector must fire")

    def _stage_audit(self, setups: list[Setup], rounds_left: int) -> bool:
        n = len(setups)
        for _ in range(rounds_left):
            self.round += 1
            clicked = False
            for s in setups:
                for label, mode in s(self.copy()):
                    c = sample_click(mode, PERFECT_DETECTOR, self.rng)
                    self.log.append((self.round, label, c))
                    if c:
                        self.eliminated.add(label)
                        clicked = True
            self._spend(n)
            if clicked:
                return True
        return False

    def _spend(self, copies: int) -> None:
        self.copies_left -= copies
        self.consumed += copies * self.mu / self.M

    def final_split(self, candidates: list[int]) -> None:
        """Pool the remaining copies and split them evenly over elimination setups."""
        left = self.copies_left
        if left == 0:
            return
        n = len(candidates)
        pooled_amp = math.sqrt(self.mu * left / self.M)
        parts = split_equal(CoherentMode(pooled_amp * self.true_phasor), n)
        self.round += 1
        for k, part in zip(candidates, parts):
            ref = pooled_amp * self.alphabet.phasor(k) / math.sqrt(n)
            c = sample_click(displace(part, -ref), PERFECT_DETECTOR, self.rng)
            if self.log is not None:
                self.log.append((self.round, k, c))
            if c:
                self.eliminated.add(k)
        self.copies_left = 0
        self.consumed += left * self.mu / self.M

    def outcome(self, basis_order=None) -> StrategyOutcome:
        # leftover copies that no stage used are dumped
        discarded = self.copies_left * self.mu / self.M
        return StrategyOutcome(
            N=self.alphabet.N,
            eliminated=frozenset(self.eliminated),
            copies_consumed=self.M - self.copies_left,
            light_consumed=self.consumed,
            light_discarded=discarded,
            basis_order=basis_order,
            click_log=self.log,
        )

    def survivors(self) -> list[int]:
        return [k for k in range(self.alphabet.N) if k not in self.eliminated]


def eliminate_phase_trial(intensity: float, true_idx: int, test_idx: int,
                          alphabet: PhaseAlphabet, rng: RandomStream) -> bool:
    """One phase-elimination shot on a copy of mean photon number ``intensity``.

    A click proves the phase is not ``test_idx``.
    """
    if intensity < 0.0:
        raise ParameterError(f"intensity must be >= 0, got {intensity}")
    amp = math.sqrt(alphabet.eta * intensity)
    signal = CoherentMode(amp * alphabet.phasor(true_idx))
    out = displace(signal, -amp * alphabet.phasor(test_idx))
    return sample_click(out, PERFECT_DETECTOR, rng)


def run_basis_measurement_2(state: TrueState, rng: RandomStream) -> StrategyOutcome:
    """Two-phase receiver: interfere with i*alpha on a 50/50 splitter and watch both ports."""
    if state.alphabet.N != 2:
        raise ParameterError("the two-output basis measurement needs N = 2")
    t = _Trial(state, 1, rng, audit=False)
    t.log = []
    for label, mode in basis_setup(state.alphabet, 0, t.copy_amplitude)(t.copy()):
        c = sample_click(mode, PERFECT_DETECTOR, rng)
        t.log.append((1, label, c))
        if c:
            t.eliminated.add(label)
    t._spend(1)
    return t.outcome()


def run_simple_scheme(state: TrueState, rng: RandomStream, audit: bool = False) -> StrategyOutcome:
    """Split into N equal copies and test each phase once."""
    t = _Trial(state, 1, rng, audit)
    t.final_split(list(range(state.alphabet.N)))
    return t.outcome()


def run_feedback_scheme_3(state: TrueState, cfg: FeedbackConfig, rng: RandomStream) -> StrategyOutcome:
    """Eliminate one of three phases with weak copies, then do two-state USD on the rest."""
    a = state.alphabet
    if a.N != 3:
        raise ParameterError("run_feedback_scheme_3 needs N = 3")
    if cfg.M < 3:
        raise ParameterError("need M >= 3")
    t = _Trial(state, cfg.M, rng, cfg.audit)
    if t.run_stage("eliminate", [0, 1, 2]) and not _done(t):
        t.final_split(t.survivors())
    return t.outcome()


def _done(t: _Trial) -> bool:
    return len(t.eliminated) >= t.alphabet.N - 1


def run_feedback_scheme_4(state: TrueState, cfg: FeedbackConfig, rng: RandomStream) -> StrategyOutcome:
    """Four-step receiver for the BB84 alphabet {0, pi/2, pi, 3pi/2}.

    Basis measurements in one basis until a photon, then in the conjugate
    basis until a second photon, then the remaining light split over
    elimination setups for the two surviving phases.
    """
    a = state.alphabet
    if a.N != 4:
        raise ParameterError("run_feedback_scheme_4 needs N = 4")
    if cfg.M < 4:
        raise ParameterError("need M >= 4")
    if cfg.basis_rule is BasisRule.RANDOM:
        first = rng.integers(2)
    else:
        first = 0
    second = 1 - first
    t = _Trial(state, cfg.M, rng, cfg.audit)
    if t.run_stage("basis", [first]):
        if len(t.eliminated) == 1:
            t.run_stage("basis", [second])
        # both ports firing in the first basis leaves the conjugate pair for step 4
        if len(t.eliminated) == 2:
            t.final_split(t.survivors())
    return t.outcome(basis_order=(first, second))


def run_feedback_scheme_N(state: TrueState, cfg: FeedbackConfig, rng: RandomStream) -> StrategyOutcome:
    """Test all surviving phases with one weak copy each per round; a click removes a phase."""
    a = state.alphabet
    if cfg.M < a.N:
        raise ParameterError(f"need M >= N, got M={cfg.M}")
    t = _Trial(state, cfg.M, rng, cfg.audit)
    while not _done(t):
        if not t.run_stage("eliminate", t.survivors()):
            break
    return t.outcome()


def run_scheme(scheme: Scheme | str, state: TrueState, cfg: FeedbackConfig, rng: RandomStream) -> StrategyOutcome:
    scheme = Scheme(scheme)
    N = state.alphabet.N
    if scheme is Scheme.BASIS2:
        return run_basis_measurement_2(state, rng)
    if scheme is Scheme.SIMPLE:
        return run_simple_scheme(state, rng, audit=cfg.audit)
    if scheme is Scheme.FEEDBACK and N == 3:
        return run_feedback_scheme_3(state, cfg, rng)
    if scheme is Scheme.FEEDBACK and N == 4:
        return run_feedback_scheme_4(state, cfg, rng)
    return run_feedback_scheme_N(state, cfg, rng)
