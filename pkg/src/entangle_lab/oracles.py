"""Ground-truth labels and baseline detectors.

PPT checks, projector fidelity witnesses, the CHSH value and the two-qubit
faithfulness test. These serve as labels for training data and as the
conventional baselines the learned witness is compared against.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .pauli import expectations
from .qcore import X, Z, hermitian_eigs, num_qubits, partial_trace, partial_transpose
from .states import Bipartition, all_bipartitions, bell_states, ghz, mix_white_noise, w_state

NPT_THRESHOLD = -1e-9


@dataclass(frozen=True, eq=False)
class WitnessSpec:
    alpha: float
    target: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


def ghz_witness(n: int) -> WitnessSpec:
    return WitnessSpec(0.5, ghz(n))


def w_witness(n: int) -> WitnessSpec:
    """Largest overlap of W_n with a bi-separable state is (n - 1) / n."""
    return WitnessSpec((n - 1) / n, w_state(n))


@dataclass(frozen=True)
class PptReport:
    per_partition: dict[Bipartition, float]
    npt_any: bool
    npt_all: bool

    @property
    def max_min_eigenvalue(self) -> float:
        return max(self.per_partition.values())


def ppt_min_eigenvalue(rho: np.ndarray, partition: Bipartition) -> float:
    """Smallest eigenvalue of the partial transpose over ``partition.part_a``."""
    n = num_qubits(rho)
    if not isinstance(partition, Bipartition) or partition.n != n:
        raise ValueError(f"partition {partition} does not cut {n} qubits")
    return float(hermitian_eigs(partial_transpose(rho, partition.part_a))[0])


def ppt_report(rho: np.ndarray) -> PptReport:
    n = num_qubits(rho)
    values = {cut: ppt_min_eigenvalue(rho, cut) for cut in all_bipartitions(n)}
    negative = [v < NPT_THRESHOLD for v in values.values()]
    return PptReport(values, any(negative), bool(negative) and all(negative))


def witness_value(rho: np.ndarray, w: WitnessSpec) -> float:
    """``Tr(W rho)`` for ``W = alpha I - |target><target|``; negative flags entanglement."""
    psi = np.asarray(w.target)
    if rho.shape != (psi.size, psi.size):
        raise ValueError(f"state shape {rho.shape} does not match target dimension {psi.size}")
    fidelity = np.vdot(psi, rho @ psi).real
    return float(w.alpha - fidelity)


GHZ3_LOCAL_TERMS = {
    "XXX": -1.0,
    "ZZI": -1.0,
    "ZIZ": -1.0,
    "IZZ": -1.0,
    "XYY": 1.0,
    "YXY": 1.0,
    "YYX": 1.0,
}


def ghz3_local_witness_value(rho: np.ndarray) -> float:
    """GHZ_3 projector witness (alpha = 1/2) evaluated from its 8 Pauli terms."""
    if num_qubits(rho) != 3:
        raise ValueError("GHZ3 local witness needs a 3-qubit state")
    obs = list(GHZ3_LOCAL_TERMS)
    vals = expectations(rho, obs)
    weights = np.array([GHZ3_LOCAL_TERMS[p] for p in obs])
    return float((3.0 + weights @ vals) / 8)


_B = (X - Z) / math.sqrt(2)
_B_PRIME = (X + Z) / math.sqrt(2)
# a = Z, a' = X; <ab> - <ab'> + <a'b> + <a'b'>
CHSH_OPERATOR = np.kron(Z, _B) - np.kron(Z, _B_PRIME) + np.kron(X, _B) + np.kron(X, _B_PRIME)


def chsh_value(rho: np.ndarray) -> float:
    if num_qubits(rho) != 2:
        raise ValueError("CHSH needs a 2-qubit state")
    return float(abs(np.trace(CHSH_OPERATOR @ rho).real))


def chsh_optimal_bell() -> tuple[str, np.ndarray]:
    """The Bell state reaching the largest CHSH value under the operator convention above."""
    states = bell_states()
    name = max(states, key=lambda k: chsh_value(np.outer(states[k], states[k].conj())))
    return name, states[name]


def unfaithfulness_chi2(rho: np.ndarray) -> float:
    """Largest eigenvalue of ``rho - (rho_A x I + I x rho_B)/2 + I/2``; above 1/2 means faithful."""
    if num_qubits(rho) != 2:
        raise ValueError("faithfulness test needs a 2-qubit state")
    eye = np.eye(2)
    chi = (
        rho
        - 0.5 * (np.kron(partial_trace(rho, [0]), eye) + np.kron(eye, partial_trace(rho, [1])))
        + 0.5 * np.eye(4)
    )
    return float(hermitian_eigs(chi)[-1])


# ---------------------------------------------------------------------------
# white-noise thresholds


def bisect_threshold(
    f: Callable[[float], float],
    lo: float = 0.0,
    hi: float = 1.0,
    tol: float = 1e-6,
    max_iter: int = 60,
) -> float | None:
    """Locate the sign change of ``f`` on ``[lo, hi]``; ``None`` when there is none."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if (f_lo < 0) == (f_hi < 0):
        return None
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


ORACLE_CLASSES = ("GHZ3", "W3", "W4", "BELL")
ORACLE_TARGETS = ("witness", "ppt", "chsh")


def oracle_target_state(state_class: str) -> tuple[np.ndarray, WitnessSpec]:
    if state_class == "GHZ3":
        spec = ghz_witness(3)
    elif state_class in ("W3", "W4"):
        spec = w_witness(int(state_class[1]))
    elif state_class == "BELL":
        spec = WitnessSpec(0.5, chsh_optimal_bell()[1])
    else:
        raise ValueError(f"unknown class {state_class!r}; expected one of {ORACLE_CLASSES}")
    return spec.target, spec


def detector_function(state_class: str, target: str) -> Callable[[float], float]:
    """Signed detector value along the white-noise path: negative while entanglement is detected."""
    psi, spec = oracle_target_state(state_class)
    if target == "witness":
        return lambda p: witness_value(mix_white_noise(psi, p), spec)
    if target == "ppt":
        # all-cut NPT holds while even the least negative cut stays negative
        return lambda p: ppt_report(mix_white_noise(psi, p)).max_min_eigenvalue
    if target == "chsh":
        if state_class != "BELL":
            raise ValueError("CHSH detector is defined for BELL only")
        return lambda p: 2.0 - chsh_value(mix_white_noise(psi, p))
    raise ValueError(f"unknown target {target!r}; expected one of {ORACLE_TARGETS}")


def noise_threshold(state_class: str, target: str, tol: float = 1e-6) -> float | None:
    return bisect_threshold(detector_function(state_class, target), tol=tol)
