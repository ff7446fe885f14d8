"""BB84 with faint phase-encoded pulses and the four-step USD receiver at Bob.

Bob's outcome classes, by number of detected photons:

* 1 photon: a basis measurement, sifted as in standard BB84;
* 2 photons: two surviving phases. When they carry the same bit value Bob
  has that bit without any basis exchange; otherwise Alice's basis picks it;
* 3 photons: the state itself is known.

A stage-1 click in the basis Alice did not use is discarded, as in standard
sifting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional

from .analytics import PhaseAlphabet
from .errors import ParameterError
from .optics import RandomStream
from .strategies import BasisRule, FeedbackConfig, TrueState, run_feedback_scheme_4


class Basis(IntEnum):
    PLUS = 0
    CROSS = 1


# phase index k = 2 * bit + basis, i.e. phase k * pi / 2
def encode(bit: int, basis: Basis | int) -> int:
    if bit not in (0, 1):
        raise ParameterError(f"bit must be 0 or 1, got {bit!r}")
    return 2 * bit + Basis(basis)


def decode(phase_index: int) -> tuple[int, Basis]:
    if not 0 <= phase_index < 4:
        raise ParameterError(f"phase index must lie in [0, 4), got {phase_index}")
    return phase_index // 2, Basis(phase_index % 2)


def bit_of(phase_index: int) -> int:
    return phase_index // 2


def basis_of(phase_index: int) -> Basis:
    return Basis(phase_index % 2)


@dataclass(frozen=True)
class AliceRecord:
    bit: int
    basis: Basis

    @property
    def phase_index(self) -> int:
        return encode(self.bit, self.basis)


@dataclass(frozen=True)
class Inference:
    """What Bob can say about the pulse before any classical discussion.

    ``kind`` is "none", "basis" (a single phase eliminated in ``basis``),
    "bit" (the bit value is known) or "state" (the phase is known).
    """

    kind: str = "none"
    basis: Optional[Basis] = None
    phase: Optional[int] = None
    bit: Optional[int] = None


@dataclass(frozen=True)
class BobRecord:
    stage_reached: int
    basis_order: tuple[Basis, Basis]
    eliminated: frozenset
    inference: Inference


def bob_measure(phase_index: int, alphabet: PhaseAlphabet, cfg: FeedbackConfig,
                rng: RandomStream) -> BobRecord:
    if alphabet.N != 4:
        raise ParameterError("BB84 uses the four-phase alphabet")
    out = run_feedback_scheme_4(TrueState(phase_index, alphabet), cfg, rng)
    stage = out.stage_reached
    survivors = sorted(set(range(4)) - out.eliminated)
    if stage == 3:
        inf = Inference("state", phase=out.conclusive_index, bit=bit_of(out.conclusive_index))
    elif stage == 2 and bit_of(survivors[0]) == bit_of(survivors[1]):
        inf = Inference("bit", bit=bit_of(survivors[0]))
    elif stage == 1:
        (e,) = out.eliminated
        inf = Inference("basis", basis=basis_of(e), phase=e)
    else:
        inf = Inference()
    first, second = out.basis_order
    return BobRecord(stage, (Basis(first), Basis(second)), out.eliminated, inf)


CATEGORIES = ("A", "B", "C", "D")


@dataclass
class SessionStats:
    """Raw sifting statistics.

    Categories: A single photon in Alice's basis, B two photons with
    coinciding bits, C two photons resolved by Alice's basis, D three photons.
    """

    pulses: int = 0
    stage_counts: list[int] = field(default_factory=lambda: [0, 0, 0, 0])
    sifted: dict[str, int] = field(default_factory=lambda: dict.fromkeys(CATEGORIES, 0))
    errors: int = 0

    @property
    def kept(self) -> int:
        return sum(self.sifted.values())

    @property
    def coincidence_fraction(self) -> float:
        two = self.stage_counts[2]
        return self.sifted["B"] / two if two else 0.0

    @property
    def error_rate(self) -> float:
        return self.errors / self.kept if self.kept else 0.0

    @property
    def key_fractions(self) -> dict[str, float]:
        return {c: (n / self.pulses if self.pulses else 0.0) for c, n in self.sifted.items()}

    def stage_fraction(self, at_least: int) -> float:
        return sum(self.stage_counts[at_least:]) / self.pulses if self.pulses else 0.0

    def add(self, alice: AliceRecord, bob: BobRecord) -> None:
        self.pulses += 1
        self.stage_counts[bob.stage_reached] += 1
        category, bit = _sift_one(alice, bob)
        if category is not None:
            self.sifted[category] += 1
            if bit != alice.bit:
                self.errors += 1

    def to_dict(self) -> dict:
        return {
            "pulses": self.pulses,
            "stage_counts": list(self.stage_counts),
            "stage_fractions": {f">={k}": self.stage_fraction(k) for k in (1, 2, 3)},
            "sifted": dict(self.sifted),
            "key_fractions": self.key_fractions,
            "kept": self.kept,
            "errors": self.errors,
            "coincidence_fraction": self.coincidence_fraction,
            "qber": self.error_rate,
        }


def _sift_one(alice: AliceRecord, bob: BobRecord) -> tuple[Optional[str], Optional[int]]:
    inf = bob.inference
    if inf.kind == "state":
        return "D", inf.bit
    if inf.kind == "bit":
        return "B", inf.bit
    if inf.kind == "basis":
        if inf.basis != alice.basis:
            return None, None
        return "A", bit_of((inf.phase + 2) % 4)
    if bob.stage_reached == 2:
        survivors = [k for k in range(4) if k not in bob.eliminated]
        in_basis = [k for k in survivors if basis_of(k) == alice.basis]
        # after both ports of one basis fire, the survivors share a basis and
        # Alice's announcement cannot separate them
        if len(in_basis) == 1:
            return "C", bit_of(in_basis[0])
    return None, None


def sift(alice_records: Iterable[AliceRecord], bob_records: Iterable[BobRecord]) -> SessionStats:
    stats = SessionStats()
    try:
        for a, b in zip(alice_records, bob_records, strict=True):
            stats.add(a, b)
    except ValueError as exc:
        raise ParameterError("Alice and Bob records differ in length") from exc
    return stats


def run_session(n_pulses: int, mu: float, eta: float = 1.0, M: int = 1000, seed: int = 0,
                basis_rule: BasisRule | str = BasisRule.RANDOM) -> SessionStats:
    """Simulate ``n_pulses`` uniformly random BB84 pulses; pulse i uses substream i."""
    if n_pulses < 1:
        raise ParameterError(f"need at least one pulse, got {n_pulses}")
    alphabet = PhaseAlphabet(4, mu, eta)
    cfg = FeedbackConfig(M=M, basis_rule=basis_rule)
    stats = SessionStats()
    for i in range(n_pulses):
        rng = RandomStream(seed, i)
        alice = AliceRecord(rng.integers(2), Basis(rng.integers(2)))
        stats.add(alice, bob_measure(alice.phase_index, alphabet, cfg, rng))
    return stats
