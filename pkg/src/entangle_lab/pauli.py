"""Pauli-string observables and feature vectors.

A Pauli string is a plain ``str`` over ``IXYZ`` with qubit 0 leftmost, e.g.
``"XIIX"``. The observable list always defines feature order.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, product

import numpy as np

from .qcore import I2, X, Y, Z, num_qubits, tensor_all

LETTERS = "IXYZ"
SINGLE = {"I": I2, "X": X, "Y": Y, "Z": Z}
IMAG_ATOL = 1e-10

# One feature set found by elimination on 4-qubit GHZ/W data.
BENCHMARK_FEATURES = ("XIIX", "YIIZ", "IIZZ", "ZXII")


def check_pauli(p: str, n: int | None = None) -> str:
    if not isinstance(p, str) or not p or any(c not in LETTERS for c in p):
        raise ValueError(f"invalid Pauli string {p!r}")
    if n is not None and len(p) != n:
        raise ValueError(f"Pauli string {p!r} does not act on {n} qubits")
    return p


def weight(p: str) -> int:
    return sum(c != "I" for c in p)


def support(p: str) -> list[int]:
    return [j for j, c in enumerate(p) if c != "I"]


def pauli_matrix(p: str) -> np.ndarray:
    check_pauli(p)
    return tensor_all(SINGLE[c] for c in p)


@lru_cache(maxsize=None)
def _popcount_table(dim: int) -> np.ndarray:
    return np.array([bin(i).count("1") for i in range(dim)], dtype=np.int64)


@lru_cache(maxsize=4096)
def _action(p: str) -> tuple[np.ndarray, np.ndarray]:
    """Column index and phase so that ``P|c> = phase[c] |col[c]>``."""
    n = len(p)
    xmask = zmask = 0
    n_y = 0
    for j, c in enumerate(p):
        bit = 1 << (n - 1 - j)
        if c in "XY":
            xmask |= bit
        if c in "ZY":
            zmask |= bit
        n_y += c == "Y"
    idx = np.arange(1 << n)
    signs = 1 - 2 * (_popcount_table(1 << n)[idx & zmask] & 1)
    phase = (1j**n_y) * signs
    cols = idx ^ xmask
    cols.setflags(write=False)
    phase.setflags(write=False)
    return cols, phase


def _real_clamped(values: np.ndarray) -> np.ndarray:
    if np.max(np.abs(values.imag), initial=0.0) > IMAG_ATOL:
        raise ValueError("Pauli expectation has a non-negligible imaginary part; state not Hermitian?")
    return np.clip(values.real, -1.0, 1.0)


def expectations(rho: np.ndarray, obs: Sequence[str]) -> np.ndarray:
    """``Tr(rho P)`` for every ``P`` in ``obs`` without building Pauli matrices.

    ``rho`` may be a single density matrix or a stack of shape ``(N, d, d)``;
    the result then has shape ``(M,)`` or ``(N, M)``.
    """
    rho = np.asarray(rho)
    single = rho.ndim == 2
    stack = rho[None] if single else rho
    n = num_qubits(stack[0])
    obs = [check_pauli(p, n) for p in obs]
    dim = 1 << n
    rows = np.arange(dim)
    out = np.empty((stack.shape[0], len(obs)), dtype=complex)
    for m, p in enumerate(obs):
        cols, phase = _action(p)
        out[:, m] = stack[:, rows, cols] @ phase
    vals = _real_clamped(out)
    return vals[0] if single else vals


def expectation(rho: np.ndarray, p: str) -> float:
    return float(expectations(rho, [p])[0])


def enumerate_k_local(n: int, k: int) -> list[str]:
    """All Pauli strings with weight 1..k on ``n`` qubits, in lexicographic (I<X<Y<Z) order."""
    if n < 1 or not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")
    out = []
    for w in range(1, k + 1):
        for sites in combinations(range(n), w):
            for letters in product("XYZ", repeat=w):
                s = ["I"] * n
                for j, c in zip(sites, letters):
                    s[j] = c
                out.append("".join(s))
    return sorted(out)


@dataclass(frozen=True)
class FeatureVector:
    observables: tuple[str, ...]
    values: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return {p: float(v) for p, v in zip(self.observables, self.values)}


def feature_vector(rho: np.ndarray, obs: Sequence[str]) -> FeatureVector:
    return FeatureVector(tuple(obs), expectations(rho, obs))


def check_permutation(perm: Sequence[int], n: int) -> list[int]:
    perm = [int(q) for q in perm]
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of 0..{n - 1}")
    return perm


def invert_permutation(perm: Sequence[int]) -> list[int]:
    inv = [0] * len(perm)
    for q, target in enumerate(perm):
        inv[target] = q
    return inv


def permute_pauli(p: str, perm: Sequence[int]) -> str:
    """Move the letter on qubit ``q`` to position ``perm[q]``.

    Same convention as :func:`entangle_lab.states.permute_qubits`, so
    ``<permute_qubits(rho, perm), p> == <rho, permute_pauli(p, inverse(perm))>``.
    """
    check_pauli(p)
    perm = check_permutation(perm, len(p))
    out = [""] * len(p)
    for q, c in enumerate(p):
        out[perm[q]] = c
    return "".join(out)


def transposition_perms(n: int) -> list[tuple[int, ...]]:
    """Identity followed by every transposition ``(i, j)``, ``i < j``, in order."""
    perms = [tuple(range(n))]
    for i, j in combinations(range(n), 2):
        perm = list(range(n))
        perm[i], perm[j] = j, i
        perms.append(tuple(perm))
    return perms


def permutation_orbit(obs: Iterable[str], perms: Iterable[Sequence[int]] | None = None) -> list[str]:
    """Deduplicated images of ``obs`` under ``perms`` in first-seen order."""
    obs = list(obs)
    if perms is None:
        perms = transposition_perms(len(obs[0]))
    seen: dict[str, None] = {}
    for perm in perms:
        for p in obs:
            seen.setdefault(permute_pauli(p, perm), None)
    return list(seen)


def lookup_features(values: Mapping[str, float], obs: Sequence[str]) -> np.ndarray:
    missing = [p for p in obs if p not in values]
    if missing:
        raise ValueError(f"missing features: {', '.join(missing)}")
    return np.array([values[p] for p in obs], dtype=float)
