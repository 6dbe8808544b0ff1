"""RBF-kernel soft-margin SVM and feature elimination.

The dual problem

    min_a  1/2 a^T Q a - e^T a,   Q_ij = y_i y_j k(x_i, x_j),
    s.t.   0 <= a_i <= C,  y^T a = 0

is solved with sequential minimal optimization using maximal-violating-pair
working-set selection. Labels are -1 (entangled) and +1 (separable).
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .pauli import invert_permutation, permute_pauli, transposition_perms

log = logging.getLogger(__name__)

MODEL_VERSION = 1
FULL_GRAM_LIMIT = 8192  # above this many samples, kernel rows are computed on demand
_TAU = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    gamma: float | None = None  # None: 1 / (n_features * var(X))
    c_penalty: float = 1.0
    tolerance: float = 1e-3
    max_passes: int = 10_000
    accuracy_floor: float = 0.99
    min_features: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.c_penalty <= 0 or self.tolerance <= 0 or self.max_passes < 1:
            raise ValueError("c_penalty, tolerance and max_passes must be positive")
        if not 0.0 <= self.accuracy_floor <= 1.0:
            raise ValueError("accuracy_floor must lie in [0, 1]")
        if self.min_features < 1:
            raise ValueError("min_features must be >= 1")


@dataclass(frozen=True, eq=False)
class SvmModel:
    observables: tuple[str, ...]
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray  # y_i * alpha_i
    bias: float
    gamma: float
    converged: bool = True
    n_iter: int = 0
    objective_trace: list[float] | None = field(default=None, repr=False)

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=float).reshape(-1, len(self.observables))
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coeffs", np.asarray(self.dual_coeffs, dtype=float))
        object.__setattr__(self, "observables", tuple(self.observables))
        if sv.shape[0] != self.dual_coeffs.shape[0]:
            raise ValueError("one dual coefficient per support vector required")
        # distances are summed in sorted-observable order so that jointly
        # permuting features and observables cannot change a decision value
        object.__setattr__(self, "_canon", np.argsort(np.array(self.observables), kind="stable"))

    @property
    def n_qubits(self) -> int:
        return len(self.observables[0]) if self.observables else 0

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "n_qubits": self.n_qubits,
            "gamma": float(self.gamma),
            "observables": list(self.observables),
            "support_vectors": self.support_vectors.tolist(),
            "dual_coeffs": self.dual_coeffs.tolist(),
            "bias": float(self.bias),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SvmModel":
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        model = cls(
            observables=tuple(d["observables"]),
            support_vectors=np.array(d["support_vectors"], dtype=float),
            dual_coeffs=np.array(d["dual_coeffs"], dtype=float),
            bias=float(d["bias"]),
            gamma=float(d["gamma"]),
        )
        if model.n_qubits != d["n_qubits"]:
            raise ValueError("n_qubits does not match the observables")
        return model


def rbf_kernel(x: Sequence[float], x2: Sequence[float], gamma: float) -> float:
    x, x2 = np.asarray(x, dtype=float), np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x2.shape}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return float(np.exp(-gamma * np.sum((x - x2) ** 2)))


def rbf_gram(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    k = a @ b.T
    k *= -2.0
    k += np.einsum("ij,ij->i", a, a)[:, None]
    k += np.einsum("ij,ij->i", b, b)[None, :]
    np.maximum(k, 0.0, out=k)
    k *= -gamma
    np.exp(k, out=k)
    return k


def scale_gamma(x: np.ndarray) -> float:
    var = float(np.var(x))
    return 1.0 / (x.shape[1] * var) if var > 0 else 1.0


class _KernelRows:
    """Kernel rows k(x_i, .) from a full Gram matrix or an LRU row cache."""

    def __init__(self, x: np.ndarray, gamma: float, cache_rows: int = 2048):
        self.x, self.gamma = x, gamma
        m = x.shape[0]
        if m <= FULL_GRAM_LIMIT:
            self.full = rbf_gram(x, x, gamma)
            self.diag = np.diagonal(self.full).copy()
        else:
            self.full = None
            self.diag = np.ones(m)
            self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
            self.cache_rows = cache_rows

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is None:
            r = rbf_gram(self.x[i], self.x, self.gamma)[0]
            self.cache[i] = r
            if len(self.cache) > self.cache_rows:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return r


def _check_data(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("expected X of shape (m, d) and y of shape (m,)")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("training data needs both labels")
    return x, y


def _smo(kern: _KernelRows, y: np.ndarray, c: float, tol: float, max_iter: int, debug: bool):
    m = y.shape[0]
    alpha = np.zeros(m)
    grad = -np.ones(m)  # gradient of the minimized dual objective
    pos = y > 0
    trace = [0.0] if debug else None
    converged = False
    it = 0
    while it < max_iter:
        v = -y * grad
        at_upper, at_lower = alpha >= c, alpha <= 0
        up = np.where(pos, ~at_upper, ~at_lower)
        low = np.where(pos, ~at_lower, ~at_upper)
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        if v[i] - v[j] < tol:
            converged = True
            break
        ki, kj = kern.row(i), kern.row(j)
        eta = max(kern.diag[i] + kern.diag[j] - 2.0 * ki[j], _TAU)
        # move alpha_i += y_i t, alpha_j -= y_j t along the equality constraint
        room_i = c - alpha[i] if pos[i] else alpha[i]
        room_j = alpha[j] if pos[j] else c - alpha[j]
        t = min((v[i] - v[j]) / eta, room_i, room_j)
        old_i, old_j = alpha[i], alpha[j]
        alpha[i] = (c if pos[i] else 0.0) if t == room_i else old_i + y[i] * t
        alpha[j] = (0.0 if pos[j] else c) if t == room_j else old_j - y[j] * t
        grad += y * (ki * (y[i] * (alpha[i] - old_i)) + kj * (y[j] * (alpha[j] - old_j)))
        it += 1
        if debug:
            trace.append(float(-0.5 * alpha @ (grad - 1.0)))
    v = -y * grad
    free = (alpha > 0) & (alpha < c)
    if np.any(free):
        bias = float(np.mean(v[free]))
    else:
        at_upper, at_lower = alpha >= c, alpha <= 0
        up = np.where(pos, ~at_upper, ~at_lower)
        low = np.where(pos, ~at_lower, ~at_upper)
        hi = np.max(v[up]) if np.any(up) else np.min(v[low])
        lo = np.min(v[low]) if np.any(low) else hi
        bias = float(0.5 * (hi + lo))
    return alpha, grad, bias, converged, it, trace


def _fit(x: np.ndarray, y: np.ndarray, observables: Sequence[str], cfg: TrainConfig, debug: bool = False):
    gamma = cfg.gamma if cfg.gamma is not None else scale_gamma(x)
    kern = _KernelRows(x, gamma)
    max_iter = cfg.max_passes * x.shape[0]
    alpha, grad, bias, converged, it, trace = _smo(kern, y, cfg.c_penalty, cfg.tolerance, max_iter, debug)
    if not converged:
        log.warning("SMO stopped after %d updates without reaching tolerance %g", it, cfg.tolerance)
    sv = alpha > 0
    model = SvmModel(
        observables=tuple(observables),
        support_vectors=x[sv],
        dual_coeffs=(y * alpha)[sv],
        bias=bias,
        gamma=gamma,
        converged=converged,
        n_iter=it,
        objective_trace=trace,
    )
    # decision on training points straight from the gradient: f(x_t) = y_t (G_t + 1) + b
    train_decision = y * (grad + 1.0) + bias
    train_acc = float(np.mean(np.where(train_decision >= 0, 1.0, -1.0) == y))
    return model, train_acc


def train(
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    observables: Sequence[str] | None = None,
    debug: bool = False,
) -> SvmModel:
    """Fit an RBF SVM. ``debug`` records the dual objective after every pair update."""
    x, y = _check_data(x, y)
    if observables is None:
        observables = [f"f{i}" for i in range(x.shape[1])]
    if len(observables) != x.shape[1]:
        raise ValueError("one observable name per feature column required")
    return _fit(x, y, observables, cfg, debug)[0]


def decision_value(model: SvmModel, x: np.ndarray) -> np.ndarray | float:
    """``sum_i coef_i k(sv_i, x) + b`` for one vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != len(model.observables):
        raise ValueError(f"expected {len(model.observables)} features, got {xb.shape[1]}")
    canon = model._canon
    sv = model.support_vectors[:, canon]
    out = np.empty(xb.shape[0])
    for start in range(0, xb.shape[0], 2048):
        chunk = xb[start : start + 2048][:, canon]
        out[start : start + 2048] = rbf_gram(chunk, sv, model.gamma) @ model.dual_coeffs + model.bias
    return float(out[0]) if single else out


def predict(model: SvmModel, x: np.ndarray) -> np.ndarray | int:
    d = decision_value(model, x)
    return np.where(d >= 0, 1, -1) if isinstance(d, np.ndarray) else (1 if d >= 0 else -1)


def accuracy(model: SvmModel, x: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("accuracy needs at least one example")
    return float(np.mean(predict(model, np.atleast_2d(x)) == y))


@dataclass(frozen=True, eq=False)
class EliminationResult:
    model: SvmModel
    selected: tuple[str, ...]
    accuracy: float
    floor_met: bool
    n_trainings: int


def eliminate_features(
    x: np.ndarray, y: np.ndarray, observables: Sequence[str], cfg: TrainConfig = TrainConfig()
) -> EliminationResult:
    """Backward feature elimination.

    Feature order is shuffled once with ``cfg.seed``. Each pass tries to drop
    features in that order, keeps the first drop whose retrained model still
    reaches ``cfg.accuracy_floor`` on the training data and starts over; it
    stops at ``cfg.min_features`` or when no single drop is acceptable.
    """
    x, y = _check_data(x, y)
    if len(observables) != x.shape[1]:
        raise ValueError("one observable per feature column required")
    if x.shape[1] < cfg.min_features:
        raise ValueError(f"{x.shape[1]} features is fewer than min_features={cfg.min_features}")
    cols = list(np.random.default_rng(cfg.seed).permutation(x.shape[1]))

    def fit(c):
        return _fit(x[:, c], y, [observables[k] for k in c], cfg)

    model, acc = fit(cols)
    trainings = 1
    if acc < cfg.accuracy_floor:
        log.warning("accuracy %.4f below floor %.4f with all features", acc, cfg.accuracy_floor)
        return EliminationResult(model, model.observables, acc, False, trainings)
    while len(cols) > cfg.min_features:
        for j in range(len(cols)):
            trial = cols[:j] + cols[j + 1 :]
            trial_model, trial_acc = fit(trial)
            trainings += 1
            if trial_acc >= cfg.accuracy_floor:
                log.info("dropped %s: %d features, accuracy %.4f", observables[cols[j]], len(trial), trial_acc)
                cols, model, acc = trial, trial_model, trial_acc
                break
        else:
            break
    return EliminationResult(model, model.observables, acc, True, trainings)


@dataclass(frozen=True)
class PermutationVerdict:
    perms: tuple[tuple[int, ...], ...]
    values: tuple[float, ...]
    labels: tuple[int, ...]
    aggregate: int

    @property
    def entangled(self) -> bool:
        return self.aggregate == -1


def orbit_features(observables: Sequence[str], perms: Sequence[Sequence[int]]) -> list[list[str]]:
    """For each relabeling, the strings whose values on ``rho`` equal the model's features on the relabeled state."""
    return [[permute_pauli(p, invert_permutation(perm)) for p in observables] for perm in perms]


def permutation_predict(
    model: SvmModel,
    rho_features: Mapping[str, float],
    perms: Sequence[Sequence[int]] | None = None,
) -> PermutationVerdict:
    """Evaluate the model on every qubit relabeling; entangled only if all say so."""
    if perms is None:
        perms = transposition_perms(model.n_qubits)
    wanted = orbit_features(model.observables, perms)
    missing = sorted({p for row in wanted for p in row if p not in rho_features})
    if missing:
        raise ValueError(f"missing orbit features: {', '.join(missing)}")
    xs = np.array([[rho_features[p] for p in row] for row in wanted], dtype=float)
    values = decision_value(model, xs)
    labels = tuple(int(v) for v in np.where(values >= 0, 1, -1))
    aggregate = -1 if all(lab == -1 for lab in labels) else 1
    return PermutationVerdict(tuple(tuple(p) for p in perms), tuple(map(float, values)), labels, aggregate)
