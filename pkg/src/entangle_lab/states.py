"""Target entangled states, noise models and random separable states.

All randomness flows through explicit ``numpy.random.Generator`` objects.
Dataset records derive their own seed from ``(dataset seed, record index)``
so every record can be regenerated on its own.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .pauli import check_permutation, invert_permutation
from .qcore import check_density, ket_to_dm, num_qubits

MAX_REDRAWS = 1000


class StateClass(str, enum.Enum):
    GHZ_NOISY = "GHZ_NOISY"
    W_NOISY = "W_NOISY"
    BELL_NOISY = "BELL_NOISY"
    SEPARABLE = "SEPARABLE"
    RANDOM = "RANDOM"


ENTANGLED_CLASSES = (StateClass.GHZ_NOISY, StateClass.W_NOISY, StateClass.BELL_NOISY)


@dataclass(frozen=True)
class NoiseParams:
    theta: float | None = None
    phi: float | None = None
    p_noise: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_noise <= 1.0:
            raise ValueError(f"p_noise must lie in [0, 1], got {self.p_noise}")


@dataclass(frozen=True)
class Bipartition:
    """A cut ``A | complement(A)`` of an ``n``-qubit register."""

    part_a: tuple[int, ...]
    n: int

    def __post_init__(self):
        a = tuple(sorted(set(int(q) for q in self.part_a)))
        if not a or len(a) != len(self.part_a) or len(a) >= self.n or a[0] < 0 or a[-1] >= self.n:
            raise ValueError(f"invalid bipartition {self.part_a} of {self.n} qubits")
        object.__setattr__(self, "part_a", a)

    @property
    def part_b(self) -> tuple[int, ...]:
        return tuple(q for q in range(self.n) if q not in self.part_a)

    def canonical(self) -> "Bipartition":
        """The same cut written with qubit 0 on the A side."""
        return self if 0 in self.part_a else Bipartition(self.part_b, self.n)

    def __str__(self) -> str:
        return "".join(map(str, self.part_a)) + "|" + "".join(map(str, self.part_b))


def all_bipartitions(n: int) -> list[Bipartition]:
    """Every cut of ``n`` qubits once, up to swapping the two sides."""
    cuts = []
    for size in range(0, n - 1):
        for rest in combinations(range(1, n), size):
            cuts.append(Bipartition((0, *rest), n))
    return cuts


def _basis_ket(n: int, amplitudes: dict[int, complex]) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    for idx, amp in amplitudes.items():
        psi[idx] = amp
    return psi


def ghz(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("GHZ state needs at least 2 qubits")
    return ghz_coherent(n, math.pi / 4, 0.0)


def ghz_coherent(n: int, theta: float, phi: float) -> np.ndarray:
    """``cos(theta)|0...0> + e^{i phi} sin(theta)|1...1>``."""
    if n < 2:
        raise ValueError("GHZ state needs at least 2 qubits")
    return _basis_ket(n, {0: math.cos(theta), (1 << n) - 1: np.exp(1j * phi) * math.sin(theta)})


def w_state(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("W state needs at least 2 qubits")
    amp = 1 / math.sqrt(n)
    return _basis_ket(n, {1 << j: amp for j in range(n)})


def bell_states() -> dict[str, np.ndarray]:
    s = 1 / math.sqrt(2)
    return {
        "phi+": _basis_ket(2, {0: s, 3: s}),
        "phi-": _basis_ket(2, {0: s, 3: -s}),
        "psi+": _basis_ket(2, {1: s, 2: s}),
        "psi-": _basis_ket(2, {1: s, 2: -s}),
    }


def mix_white_noise(pure: np.ndarray, p_noise: float) -> np.ndarray:
    """``(1 - p) |psi><psi| + p I / 2**n``; ``pure`` may also be a density matrix."""
    if not 0.0 <= p_noise <= 1.0:
        raise ValueError(f"p_noise must lie in [0, 1], got {p_noise}")
    pure = np.asarray(pure, dtype=complex)
    rho = ket_to_dm(pure) if pure.ndim == 1 else pure
    dim = rho.shape[0]
    return (1 - p_noise) * rho + p_noise * np.eye(dim) / dim


def random_pure(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random ket from a normalized complex Gaussian vector."""
    if n < 1:
        raise ValueError("need at least 1 qubit")
    dim = 1 << n
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


def random_dm(n: int, rng: np.random.Generator) -> np.ndarray:
    """Ginibre-induced mixed state ``G G^dag / Tr(G G^dag)``."""
    if n < 1:
        raise ValueError("need at least 1 qubit")
    dim = 1 << n
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def permute_qubits(rho: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    """Relabel qubits: the state of input qubit ``q`` ends up on qubit ``perm[q]``."""
    n = num_qubits(rho)
    perm = check_permutation(perm, n)
    inv = invert_permutation(perm)
    t = np.asarray(rho).reshape([2] * (2 * n))
    t = t.transpose(inv + [n + q for q in inv])
    return t.reshape(rho.shape)


def place_factors(rho_a: np.ndarray, rho_b: np.ndarray, partition: Bipartition) -> np.ndarray:
    """``rho_a (x) rho_b`` with ``rho_a`` on ``partition.part_a`` (ascending) and ``rho_b`` on the rest."""
    order = list(partition.part_a) + list(partition.part_b)
    if num_qubits(rho_a) != len(partition.part_a) or num_qubits(rho_b) != len(partition.part_b):
        raise ValueError("factor sizes do not match the partition")
    return permute_qubits(np.kron(rho_a, rho_b), order)


def random_biseparable(n: int, partition: Bipartition, rng: np.random.Generator) -> np.ndarray:
    if not isinstance(partition, Bipartition) or partition.n != n:
        raise ValueError(f"partition {partition} is not a bipartition of {n} qubits")
    rho_a = random_dm(len(partition.part_a), rng)
    rho_b = random_dm(len(partition.part_b), rng)
    return place_factors(rho_a, rho_b, partition)


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class NoiseRanges:
    theta: tuple[float, float] = (0.0, math.pi / 3)
    phi: tuple[float, float] = (0.0, 0.6 * math.pi)
    ghz_p: tuple[float, float] = (0.0, 0.1)
    w_p: tuple[float, float] = (0.0, 0.5)
    bell_p: tuple[float, float] = (0.0, 1 / 3)

    def __post_init__(self):
        for name in ("theta", "phi", "ghz_p", "w_p", "bell_p"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} range ({lo}, {hi}) is empty")
            if name.endswith("_p") and not (0.0 <= lo and hi <= 1.0):
                raise ValueError(f"{name} range ({lo}, {hi}) must lie within [0, 1]")


@dataclass(frozen=True)
class ClassSpec:
    tag: StateClass
    count: int
    partition: tuple[int, ...] | None = None


@dataclass(frozen=True)
class DatasetSpec:
    n: int
    classes: tuple[ClassSpec, ...]
    ranges: NoiseRanges = field(default_factory=NoiseRanges)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class StateRecord:
    class_tag: StateClass
    label: int
    noise: NoiseParams
    partition: Bipartition | None
    seed: int
    rho: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label}")
        if self.class_tag is StateClass.SEPARABLE and self.label != 1:
            raise ValueError("separable records must carry label +1")

    def with_features(self, features: np.ndarray) -> "StateRecord":
        return replace(self, features=np.asarray(features, dtype=float))


def default_partitions(n: int) -> list[tuple[int, ...]]:
    """``rho_1 (x) rho_rest`` plus, for n >= 4, the half/half cut."""
    parts = [(0,)]
    if n >= 4:
        parts.append(tuple(range(n // 2)))
    return parts


def default_class_mix(n: int, per_class: int) -> tuple[ClassSpec, ...]:
    entangled = [StateClass.BELL_NOISY] if n == 2 else [StateClass.GHZ_NOISY, StateClass.W_NOISY]
    mix = [ClassSpec(tag, per_class) for tag in entangled]
    mix += [ClassSpec(StateClass.SEPARABLE, per_class, part) for part in default_partitions(n)]
    return tuple(mix)


def record_seed(dataset_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(dataset_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    return float(rng.uniform(bounds[0], bounds[1]))


def _draw_entangled(
    tag: StateClass, n: int, ranges: NoiseRanges, rng: np.random.Generator
) -> tuple[NoiseParams, np.ndarray]:
    if tag is StateClass.GHZ_NOISY:
        theta, phi = _uniform(rng, ranges.theta), _uniform(rng, ranges.phi)
        p = _uniform(rng, ranges.ghz_p)
        return NoiseParams(theta, phi, p), mix_white_noise(ghz_coherent(n, theta, phi), p)
    if tag is StateClass.W_NOISY:
        p = _uniform(rng, ranges.w_p)
        return NoiseParams(p_noise=p), mix_white_noise(w_state(n), p)
    if n != 2:
        raise ValueError("BELL_NOISY needs n = 2")
    p = _uniform(rng, ranges.bell_p)
    return NoiseParams(p_noise=p), mix_white_noise(ghz(2), p)


def make_record(
    tag: StateClass,
    n: int,
    seed: int,
    ranges: NoiseRanges = NoiseRanges(),
    partition: Sequence[int] | None = None,
) -> StateRecord:
    """Regenerate one dataset row from its own seed."""
    from .oracles import ppt_report

    tag = StateClass(tag)
    rng = np.random.default_rng(seed)
    if tag is StateClass.SEPARABLE:
        cut = Bipartition(tuple(partition if partition is not None else (0,)), n)
        rho = random_biseparable(n, cut, rng)
        record = StateRecord(tag, 1, NoiseParams(), cut, seed, rho)
    elif tag is StateClass.RANDOM:
        rho = random_dm(n, rng)
        # -1 only when no bipartition is PPT, matching the biseparable-vs-entangled labels
        label = -1 if ppt_report(rho).npt_all else 1
        record = StateRecord(tag, label, NoiseParams(), None, seed, rho)
    else:
        for _ in range(MAX_REDRAWS):
            noise, rho = _draw_entangled(tag, n, ranges, rng)
            # PPT on every cut: degenerate draw (e.g. theta ~ 0), not a valid entangled example
            if ppt_report(rho).npt_any:
                break
        else:
            raise RuntimeError(f"no NPT {tag.value} state after {MAX_REDRAWS} draws; check noise ranges")
        record = StateRecord(tag, -1, noise, None, seed, rho)
    if __debug__:
        check_density(record.rho)
    return record


def make_dataset(spec: DatasetSpec) -> list[StateRecord]:
    if not spec.classes:
        raise ValueError("dataset needs at least one class")
    records = []
    index = 0
    for cls in spec.classes:
        if cls.count < 1:
            raise ValueError(f"class {cls.tag} count must be >= 1")
        for _ in range(cls.count):
            seed = record_seed(spec.seed, index)
            records.append(make_record(cls.tag, spec.n, seed, spec.ranges, cls.partition))
            index += 1
    return records


def density_stack(records: Iterable[StateRecord]) -> np.ndarray:
    return np.stack([r.rho for r in records])
