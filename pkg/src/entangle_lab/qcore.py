"""Dense linear algebra and state primitives.

States are plain numpy arrays: a ket is a complex vector of length ``2**n``
and a density matrix is a complex ``(2**n, 2**n)`` array. Qubit 0 is the most
significant bit of a basis-state index, so ``|q0 q1 ... q_{n-1}>`` maps to the
integer ``q0 * 2**(n-1) + ... + q_{n-1}``.
"""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

HERMITIAN_ATOL = 1e-10
TRACE_ATOL = 1e-10
PSD_SLACK = -1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def num_qubits(a: np.ndarray) -> int:
    """Number of qubits of a ket or square operator whose dimension is a power of two."""
    dim = a.shape[0]
    n = dim.bit_length() - 1
    if dim < 1 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    if a.ndim == 2 and a.shape[1] != dim:
        raise ValueError(f"operator must be square, got shape {a.shape}")
    return n


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def tensor_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(a).T


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def check_density(rho: np.ndarray) -> np.ndarray:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, trace one and PSD (within slack)."""
    rho = np.asarray(rho)
    num_qubits(rho)
    if np.max(np.abs(rho - dagger(rho)), initial=0.0) > HERMITIAN_ATOL:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > TRACE_ATOL:
        raise ValueError(f"density matrix trace {np.trace(rho).real:.3g} != 1")
    if np.linalg.eigvalsh(rho)[0] < PSD_SLACK:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def _qubit_set(indices: Iterable[int], n: int, what: str) -> list[int]:
    qs = sorted(set(int(q) for q in indices))
    if any(q < 0 or q >= n for q in qs):
        raise ValueError(f"{what} {qs} out of range for {n} qubits")
    return qs


def partial_trace(rho: np.ndarray, keep: Iterable[int]) -> np.ndarray:
    """Reduced state on ``keep`` (kept qubits stay in ascending order)."""
    n = num_qubits(rho)
    kept = _qubit_set(keep, n, "keep")
    if not kept:
        raise ValueError("keep must be nonempty")
    t = np.asarray(rho).reshape([2] * (2 * n))
    m = n
    for q in reversed([q for q in range(n) if q not in kept]):
        t = np.trace(t, axis1=q, axis2=m + q)
        m -= 1
    d = 1 << m
    return t.reshape(d, d)


def partial_transpose(rho: np.ndarray, subsystem_a: Iterable[int]) -> np.ndarray:
    n = num_qubits(rho)
    part = _qubit_set(subsystem_a, n, "subsystem")
    t = np.asarray(rho).reshape([2] * (2 * n))
    axes = list(range(2 * n))
    for q in part:
        axes[q], axes[n + q] = axes[n + q], axes[q]
    d = 1 << n
    return t.transpose(axes).reshape(d, d)


def hermitian_eigh(a: np.ndarray, atol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if np.max(np.abs(a - dagger(a)), initial=0.0) > atol:
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigh(a)


def hermitian_eigs(a: np.ndarray, atol: float = 1e-8) -> np.ndarray:
    """Real eigenvalues of a Hermitian matrix in ascending order."""
    return hermitian_eigh(a, atol)[0]


def is_unitary(u: np.ndarray, atol: float = 1e-8) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.allclose(
        u @ dagger(u), np.eye(u.shape[0]), atol=atol
    )


def born_probabilities(rho: np.ndarray, basis_rotation: np.ndarray | None = None) -> np.ndarray:
    """Computational-basis outcome distribution of ``U rho U^dagger``."""
    rho = np.asarray(rho)
    if basis_rotation is None:
        diag = np.diagonal(rho).real
    else:
        u = np.asarray(basis_rotation)
        if u.shape != rho.shape:
            raise ValueError(f"rotation shape {u.shape} does not match state shape {rho.shape}")
        if not is_unitary(u):
            raise ValueError("basis rotation is not unitary")
        # diag(U rho U^dag)_b = sum_{jk} U_bj rho_jk conj(U_bk)
        diag = np.einsum("bj,jk,bk->b", u, rho, u.conj()).real
    p = np.clip(diag, 0.0, None)
    return p / p.sum()


def born_sample(
    rho: np.ndarray, basis_rotation: np.ndarray | None, rng: np.random.Generator
) -> str:
    """Draw one measurement outcome, returned as a bitstring with qubit 0 leftmost."""
    n = num_qubits(rho)
    p = born_probabilities(rho, basis_rotation)
    idx = int(rng.choice(p.size, p=p))
    return format(idx, f"0{n}b") if n else ""
