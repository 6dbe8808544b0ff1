"""Single-copy Pauli measurements and feature estimation.

Three estimators share one measurement simulator:

* randomized classical shadows (uniform random bases, inverse-channel snapshots),
* derandomized shadows (greedy deterministic bases, averages over hitting rounds),
* independent estimation (each observable measured on its own share of copies).

Letters are coded as in :mod:`entangle_lab.pauli`: I=0, X=1, Y=2, Z=3.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .pauli import check_pauli, weight
from .qcore import HADAMARD, I2, born_probabilities, num_qubits, tensor_all

CODE = {"I": 0, "X": 1, "Y": 2, "Z": 3}
LETTER = "IXYZ"
BASIS_CHANGE = {
    "X": HADAMARD,
    "Y": np.array([[1, -1j], [1, 1j]], dtype=complex) / math.sqrt(2),
    "Z": I2,
}
# greedy tie-break order for derandomization
_TIE_ORDER = np.array([CODE["Z"], CODE["X"], CODE["Y"]])


class Scheme(str, enum.Enum):
    RANDOMIZED = "RANDOMIZED"
    DERANDOMIZED = "DERANDOMIZED"


def _encode(words: Sequence[str]) -> np.ndarray:
    return np.array([[CODE[c] for c in w] for w in words], dtype=np.int8).reshape(len(words), -1)


def _decode(codes: np.ndarray) -> list[str]:
    return ["".join(LETTER[c] for c in row) for row in codes]


@dataclass(frozen=True)
class MeasurementPlan:
    rounds: tuple[str, ...]
    scheme: Scheme = Scheme.RANDOMIZED

    def __post_init__(self):
        if not self.rounds:
            raise ValueError("plan needs at least one round")
        n = len(self.rounds[0])
        for w in self.rounds:
            if len(w) != n or any(c not in "XYZ" for c in w):
                raise ValueError(f"invalid measurement word {w!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.rounds[0])

    def codes(self) -> np.ndarray:
        return _encode(self.rounds)


class Snapshot(NamedTuple):
    bases: str
    bits: str


@dataclass(frozen=True, eq=False)
class ShadowSet:
    """Measurement record: ``bases`` holds letter codes 1..3, ``bits`` holds 0/1, both ``(R, n)``."""

    bases: np.ndarray
    bits: np.ndarray
    scheme: Scheme = Scheme.RANDOMIZED

    def __post_init__(self):
        if self.bases.ndim != 2 or self.bases.shape != self.bits.shape or self.bases.shape[0] == 0:
            raise ValueError("shadow needs matching nonempty (rounds, qubits) arrays")
        if np.any((self.bases < 1) | (self.bases > 3)) or np.any((self.bits != 0) & (self.bits != 1)):
            raise ValueError("bases must be X/Y/Z codes and bits must be 0/1")

    @property
    def n_qubits(self) -> int:
        return self.bases.shape[1]

    def __len__(self) -> int:
        return self.bases.shape[0]

    @property
    def snapshots(self) -> list[Snapshot]:
        words = _decode(self.bases)
        bits = ["".join(map(str, row)) for row in self.bits]
        return [Snapshot(w, b) for w, b in zip(words, bits)]

    @classmethod
    def from_snapshots(cls, snapshots: Sequence[Snapshot], scheme: Scheme = Scheme.RANDOMIZED) -> "ShadowSet":
        bases = _encode([s.bases for s in snapshots])
        bits = np.array([[int(b) for b in s.bits] for s in snapshots], dtype=np.int8).reshape(bases.shape)
        return cls(bases, bits, Scheme(scheme))


def sample_random_plan(n: int, r_rounds: int, rng: np.random.Generator) -> MeasurementPlan:
    if r_rounds < 1:
        raise ValueError("need at least one round")
    codes = rng.integers(1, 4, size=(r_rounds, n))
    return MeasurementPlan(tuple(_decode(codes)), Scheme.RANDOMIZED)


def derandomize_plan(obs: Sequence[str], r_rounds: int, epsilon: float = 0.9) -> MeasurementPlan:
    """Greedy deterministic measurement plan for a list of Pauli observables.

    Letters are fixed round by round and qubit by qubit, each time minimizing
    ``sum_o prod_r (1 - nu * p_r(o))`` with ``nu = 1 - exp(-epsilon**2 / 2)``.
    ``p_r(o)`` is 1 or 0 for finished rounds, the probability that the
    partially fixed current round still hits ``o`` (1/3 per undecided support
    qubit), and ``3**-weight(o)`` for rounds not started yet.
    """
    if not obs:
        raise ValueError("need at least one observable")
    if r_rounds < 1:
        raise ValueError("need at least one round")
    for p in obs:
        check_pauli(p, len(obs[0]))
        if weight(p) == 0:
            raise ValueError("identity observable cannot be planned for")
    rounds = _derandomize(tuple(obs), int(r_rounds), float(epsilon))
    return MeasurementPlan(rounds, Scheme.DERANDOMIZED)


@lru_cache(maxsize=64)
def _derandomize(obs: tuple[str, ...], r_rounds: int, epsilon: float) -> tuple[str, ...]:
    codes = _encode(obs)
    m, n = codes.shape
    nu = 1.0 - math.exp(-(epsilon**2) / 2)
    log_miss = math.log1p(-nu)
    in_support = codes != 0
    # suffix[:, k] = support size of each observable on qubits k..n-1
    suffix = np.concatenate([np.cumsum(in_support[:, ::-1], axis=1)[:, ::-1], np.zeros((m, 1), int)], axis=1)
    log_future = np.log1p(-nu * 3.0 ** (-suffix[:, 0]))
    hits = np.zeros(m)
    # compatible[c, o, k]: letter _TIE_ORDER[c] on qubit k does not conflict with observable o
    compatible = (~in_support)[None] | (codes[None] == _TIE_ORDER[:, None, None])
    plan = np.empty((r_rounds, n), dtype=np.int8)
    for r in range(r_rounds):
        base = hits * log_miss + (r_rounds - 1 - r) * log_future
        alive = np.ones(m, dtype=bool)
        for k in range(n):
            still = alive[None] & compatible[:, :, k]
            p_hit = still * 3.0 ** (-suffix[:, k + 1])
            log_cost = base[None] + np.log1p(-nu * p_hit)
            top = log_cost.max(axis=1, keepdims=True)
            cost = top[:, 0] + np.log(np.exp(log_cost - top).sum(axis=1))
            choice = int(np.argmin(cost))
            plan[r, k] = _TIE_ORDER[choice]
            alive = still[choice]
        hits += alive
    return tuple(_decode(plan))


def basis_rotation(word: str) -> np.ndarray:
    return tensor_all(BASIS_CHANGE[c] for c in word)


def _outcome_bits(indices: np.ndarray, n: int) -> np.ndarray:
    shifts = np.arange(n - 1, -1, -1)
    return ((indices[:, None] >> shifts) & 1).astype(np.int8)


def collect_shadow(rho: np.ndarray, plan: MeasurementPlan, rng: np.random.Generator) -> ShadowSet:
    """Measure one copy of ``rho`` per plan round.

    Round ``r`` consumes the ``r``-th uniform variate of a single draw from
    ``rng``, so outcomes depend only on the seed and the round index.
    """
    n = num_qubits(rho)
    if plan.n_qubits != n:
        raise ValueError(f"plan acts on {plan.n_qubits} qubits, state has {n}")
    u = rng.random(len(plan.rounds))
    words, inverse = np.unique(np.array(plan.rounds), return_inverse=True)
    dim = 1 << n
    outcomes = np.empty(len(plan.rounds), dtype=np.int64)
    for w_idx, word in enumerate(words):
        mask = inverse.ravel() == w_idx
        cdf = np.cumsum(born_probabilities(rho, basis_rotation(str(word))))
        outcomes[mask] = np.minimum(np.searchsorted(cdf, u[mask], side="right"), dim - 1)
    return ShadowSet(plan.codes(), _outcome_bits(outcomes, n), plan.scheme)


class ShadowEstimate(NamedTuple):
    value: float
    hits: int

    @property
    def never_hit(self) -> bool:
        return self.hits == 0


def _hits_and_signs(shadow: ShadowSet, p: str) -> tuple[np.ndarray, np.ndarray]:
    check_pauli(p, shadow.n_qubits)
    supp = [j for j, c in enumerate(p) if c != "I"]
    if not supp:
        raise ValueError("cannot estimate the identity observable")
    want = np.array([CODE[p[j]] for j in supp])
    hit = np.all(shadow.bases[:, supp] == want, axis=1)
    signs = 1 - 2 * (shadow.bits[:, supp].sum(axis=1) & 1)
    return hit, signs


def estimate_pauli(shadow: ShadowSet, p: str, scheme: Scheme | None = None) -> ShadowEstimate:
    """Shadow estimate of ``<p>`` plus the number of rounds measuring ``p``'s support correctly."""
    hit, signs = _hits_and_signs(shadow, p)
    n_hits = int(hit.sum())
    scheme = Scheme(scheme or shadow.scheme)
    if scheme is Scheme.RANDOMIZED:
        value = float(np.mean(hit * signs * 3.0 ** weight(p)))
    else:
        value = float(signs[hit].mean()) if n_hits else 0.0
    return ShadowEstimate(value, n_hits)


def estimate_features(
    shadow: ShadowSet, obs: Sequence[str], scheme: Scheme | None = None
) -> tuple[np.ndarray, np.ndarray]:
    results = [estimate_pauli(shadow, p, scheme) for p in obs]
    return np.array([r.value for r in results]), np.array([r.hits for r in results])


def independent_estimate(
    rho: np.ndarray, obs: Sequence[str], total_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Split ``total_samples`` copies evenly and measure each observable on its own share."""
    n = num_qubits(rho)
    if total_samples < len(obs):
        raise ValueError(f"{total_samples} samples cannot cover {len(obs)} observables")
    shots = total_samples // len(obs)
    dim = 1 << n
    out = np.empty(len(obs))
    for i, p in enumerate(obs):
        check_pauli(p, n)
        word = "".join(c if c != "I" else "Z" for c in p)
        probs = born_probabilities(rho, basis_rotation(word))
        outcomes = rng.choice(dim, size=shots, p=probs)
        bits = _outcome_bits(outcomes, n)[:, [j for j, c in enumerate(p) if c != "I"]]
        out[i] = np.mean(1 - 2 * (bits.sum(axis=1) & 1))
    return out


def avg_squared_error(estimates: Sequence[float], truths: Sequence[float]) -> tuple[float, np.ndarray]:
    """Mean squared deviation and the per-observable squared errors."""
    est, tru = np.asarray(estimates, dtype=float), np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {tru.shape}")
    sq = (est - tru) ** 2
    return float(sq.mean()), sq
