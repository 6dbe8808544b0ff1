"""``entangle-lab`` command line.

Every command writes its outputs plus ``<out>.manifest.json`` recording the
resolved configuration and output digests; ``entangle-lab replay MANIFEST``
re-runs a command from its manifest and checks the digests.

Exit codes: 0 success, 2 usage error, 3 accuracy floor unmet, 4 numerical
failure (or replay mismatch).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .io import (
    dataset_arrays,
    dump_json,
    load_json,
    load_model,
    read_dataset,
    read_shadow,
    save_model,
    sha256_file,
    write_dataset,
    write_shadow,
)
from .oracles import (
    ORACLE_CLASSES,
    ORACLE_TARGETS,
    ghz_witness,
    noise_threshold,
    ppt_report,
    w_witness,
    witness_value,
)
from .pauli import (
    BENCHMARK_FEATURES,
    check_pauli,
    enumerate_k_local,
    expectations,
    permutation_orbit,
    transposition_perms,
)
from .qcore import num_qubits
from .shadows import (
    Scheme,
    avg_squared_error,
    collect_shadow,
    derandomize_plan,
    estimate_features,
    independent_estimate,
    sample_random_plan,
)
from .states import (
    Bipartition,
    DatasetSpec,
    NoiseRanges,
    StateClass,
    default_class_mix,
    density_stack,
    ghz_coherent,
    make_dataset,
    mix_white_noise,
    random_biseparable,
    random_dm,
    w_state,
)
from .svm import TrainConfig, accuracy, eliminate_features, orbit_features, permutation_predict

log = logging.getLogger("entangle_lab")

EXIT_OK, EXIT_USAGE, EXIT_FLOOR, EXIT_NUMERIC = 0, 2, 3, 4
BENCH_METHODS = ("independent", "randomized", "derandomized")
BENCH_HEADER = ("method", "n_samples", "avg_error", "variance", "status")
DEFAULT_EPSILON = 0.9


class UsageError(Exception):
    pass


_NUM = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:e[+-]?\d+)?)?\s*\*?\s*(pi)?\s*(?:/\s*(\d+\.?\d*))?$")


def parse_number(text: str) -> float:
    """Float with optional ``pi`` factor and divisor: ``0.55pi``, ``pi/3``, ``1/3``, ``-0.2``."""
    s = str(text).strip().lower()
    m = _NUM.match(s)
    if not s or not m or (m.group(1) is None and m.group(2) is None):
        raise argparse.ArgumentTypeError(f"cannot parse number {text!r}")
    coef = m.group(1)
    value = float(coef) if coef not in (None, "+", "-") else (-1.0 if coef == "-" else 1.0)
    if m.group(2):
        value *= math.pi
    if m.group(3):
        value /= float(m.group(3))
    return value


def parse_range(text: str) -> tuple[float, float]:
    parts = str(text).split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}")
    lo, hi = (parse_number(p) for p in parts)
    if lo > hi:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo, hi


def parse_int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


# ---------------------------------------------------------------------------
# commands; each returns (exit code, output paths, input paths, summary text)


def cmd_gen_dataset(cfg: dict):
    n = cfg["n"] or 4
    k = cfg["k"] or 2
    if cfg["per_class"] < 1:
        raise UsageError("--per-class must be >= 1")
    ranges = NoiseRanges(
        theta=tuple(cfg["theta_range"]),
        phi=tuple(cfg["phi_range"]),
        ghz_p=tuple(cfg["ghz_p_range"]),
        w_p=tuple(cfg["p_range"]),
        bell_p=tuple(cfg["p_range"]),
    )
    obs = enumerate_k_local(n, k)
    spec = DatasetSpec(n, default_class_mix(n, cfg["per_class"]), ranges, cfg["seed"])
    records = make_dataset(spec)
    features = expectations(density_stack(records), obs)
    records = [r.with_features(f) for r, f in zip(records, features)]
    out = Path(cfg["out"])
    write_dataset(out, records)
    summary = f"wrote {len(records)} records x {len(obs)} features to {out}"
    return EXIT_OK, [out], [], summary


def _dataset_shape(cfg: dict) -> tuple[int, int]:
    n, k = cfg["n"], cfg["k"]
    sidecar = Path(str(cfg["dataset"]) + ".manifest.json")
    if (n is None or k is None) and sidecar.exists():
        meta = load_json(sidecar)["config"]
        n = n if n is not None else meta.get("n")
        k = k if k is not None else meta.get("k")
    return n or 4, k or 2


def cmd_train(cfg: dict):
    rows = read_dataset(cfg["dataset"])
    n, k = _dataset_shape(cfg)
    obs = enumerate_k_local(n, k)
    x, y = dataset_arrays(rows)
    if x.shape[1] != len(obs):
        raise UsageError(f"dataset has {x.shape[1]} features; n={n}, k={k} gives {len(obs)}")
    if not 0.0 <= cfg["test_fraction"] < 1.0:
        raise UsageError("--test-fraction must lie in [0, 1)")
    order = np.random.default_rng(cfg["seed"]).permutation(len(y))
    n_test = int(round(cfg["test_fraction"] * len(y)))
    test, tr = order[:n_test], order[n_test:]
    tc = TrainConfig(
        gamma=cfg["gamma"],
        c_penalty=cfg["c"],
        tolerance=cfg["tolerance"],
        max_passes=cfg["max_passes"],
        accuracy_floor=cfg["accuracy_floor"],
        min_features=min(cfg["min_features"], len(obs)),
        seed=cfg["seed"],
    )
    result = eliminate_features(x[tr], y[tr], obs, tc)
    cols = [obs.index(p) for p in result.selected]
    test_acc = accuracy(result.model, x[test][:, cols], y[test]) if n_test else None
    orbit = permutation_orbit(result.selected)
    out = Path(cfg["out"])
    save_model(out, result.model)
    metrics_path = out.with_suffix(".metrics.json")
    dump_json(
        metrics_path,
        {
            "n_train": int(len(tr)),
            "n_test": int(n_test),
            "train_accuracy": result.accuracy,
            "test_accuracy": test_acc,
            "floor_met": result.floor_met,
            "accuracy_floor": tc.accuracy_floor,
            "selected": list(result.selected),
            "orbit": orbit,
            "orbit_size": len(orbit),
            "n_trainings": result.n_trainings,
            "n_support_vectors": int(result.model.dual_coeffs.size),
            "converged": result.model.converged,
            "gamma": result.model.gamma,
            "c_penalty": tc.c_penalty,
        },
    )
    summary = (
        f"features {','.join(result.selected)}; train accuracy {result.accuracy:.4f}"
        + (f", test accuracy {test_acc:.4f}" if test_acc is not None else "")
        + ("" if result.floor_met else " (accuracy floor unmet)")
    )
    code = EXIT_OK if result.floor_met else EXIT_FLOOR
    return code, [out, metrics_path], [Path(cfg["dataset"])], summary


def _state_from_cfg(cfg: dict, n: int) -> np.ndarray:
    tag = StateClass(cfg["state"])
    p = cfg["p_noise"]
    if not 0.0 <= p <= 1.0:
        raise UsageError("--p-noise must lie in [0, 1]")
    rng = np.random.default_rng(cfg["seed"])
    if tag is StateClass.GHZ_NOISY:
        return mix_white_noise(ghz_coherent(n, cfg["theta"], cfg["phi"]), p)
    if tag is StateClass.W_NOISY:
        return mix_white_noise(w_state(n), p)
    if tag is StateClass.BELL_NOISY:
        if n != 2:
            raise UsageError("BELL_NOISY needs a 2-qubit model")
        return mix_white_noise(ghz_coherent(2, math.pi / 4, 0.0), p)
    if tag is StateClass.SEPARABLE:
        part = cfg["partition"] or [0]
        try:
            cut = Bipartition(tuple(part), n)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return random_biseparable(n, cut, rng)
    return random_dm(n, rng)


def cmd_predict(cfg: dict):
    model = load_model(cfg["model"])
    n = model.n_qubits
    needed = sorted({p for row in orbit_features(model.observables, transposition_perms(n)) for p in row})
    modes = [m for m in ("state", "features", "shadow") if cfg[m]]
    if len(modes) != 1:
        raise UsageError("give exactly one of --state, --features, --shadow")
    report: dict = {"mode": modes[0], "model": str(cfg["model"])}
    inputs = [Path(cfg["model"])]
    outputs = []
    if cfg["state"]:
        rho = _state_from_cfg(cfg, n)
        report["state"] = {
            "class": cfg["state"],
            "theta": cfg["theta"],
            "phi": cfg["phi"],
            "p_noise": cfg["p_noise"],
            "partition": cfg["partition"],
            "seed": cfg["seed"],
        }
        if cfg["rounds"]:
            rng = np.random.default_rng(cfg["seed"])
            scheme = Scheme(cfg["scheme"])
            plan = (
                derandomize_plan(needed, cfg["rounds"], cfg["epsilon"])
                if scheme is Scheme.DERANDOMIZED
                else sample_random_plan(n, cfg["rounds"], rng)
            )
            shadow = collect_shadow(rho, plan, rng)
            values, hits = estimate_features(shadow, needed)
            report["estimated_from_rounds"] = cfg["rounds"]
            report["never_hit"] = [p for p, h in zip(needed, hits) if h == 0]
            if cfg["save_shadow"]:
                write_shadow(cfg["save_shadow"], shadow)
                outputs.append(Path(cfg["save_shadow"]))
        else:
            values = expectations(rho, needed)
        ppt = ppt_report(rho)
        report["ppt"] = {
            "per_partition": {str(c): v for c, v in ppt.per_partition.items()},
            "npt_any": ppt.npt_any,
            "npt_all": ppt.npt_all,
        }
        report["fidelity_witness"] = {
            "GHZ": witness_value(rho, ghz_witness(n)),
            "W": witness_value(rho, w_witness(n)),
        }
        features = dict(zip(needed, map(float, values)))
    elif cfg["features"]:
        raw = load_json(cfg["features"])
        features = {check_pauli(p, n): float(v) for p, v in raw.items()}
        inputs.append(Path(cfg["features"]))
    else:
        shadow = read_shadow(cfg["shadow"], cfg["scheme"] if cfg["scheme_given"] else None)
        if shadow.n_qubits != n:
            raise UsageError(f"shadow has {shadow.n_qubits} qubits, model expects {n}")
        values, hits = estimate_features(shadow, needed)
        features = dict(zip(needed, map(float, values)))
        report["scheme"] = shadow.scheme.value
        report["never_hit"] = [p for p, h in zip(needed, hits) if h == 0]
        inputs.append(Path(cfg["shadow"]))
    try:
        verdict = permutation_predict(model, features)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report["per_permutation"] = [
        {"perm": list(p), "decision_value": v, "label": lab}
        for p, v, lab in zip(verdict.perms, verdict.values, verdict.labels)
    ]
    report["aggregate_label"] = verdict.aggregate
    report["verdict"] = "ENTANGLED" if verdict.entangled else "SEPARABLE"
    if "ppt" in report:
        # the all-permutation verdict claims entanglement across every cut, like npt_all
        report["ppt_agrees"] = report["ppt"]["npt_all"] == verdict.entangled
    out = Path(cfg["out"])
    dump_json(out, report)
    return EXIT_OK, [out, *outputs], inputs, f"verdict {report['verdict']}"


def _trial_rng(seed: int, method: int, samples: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, method, samples, trial]))


def run_shadow_bench(
    rho: np.ndarray,
    obs: list[str],
    grid: list[int],
    trials: int,
    methods: tuple[str, ...] = BENCH_METHODS,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
) -> list[dict]:
    """Mean and variance (over trials) of the observable-averaged squared error."""
    n = num_qubits(rho)
    truths = expectations(rho, obs)
    rows = []
    for method in methods:
        m_id = BENCH_METHODS.index(method)
        for samples in grid:
            if method == "independent" and samples < len(obs):
                rows.append(dict(method=method, n_samples=samples, avg_error=math.nan, variance=math.nan, status="unsupported"))
                continue
            plan = derandomize_plan(obs, samples, epsilon) if method == "derandomized" else None
            errors = []
            for t in range(trials):
                rng = _trial_rng(seed, m_id, samples, t)
                if method == "independent":
                    est = independent_estimate(rho, obs, samples, rng)
                else:
                    if plan is None:
                        shadow = collect_shadow(rho, sample_random_plan(n, samples, rng), rng)
                    else:
                        shadow = collect_shadow(rho, plan, rng)
                    est = estimate_features(shadow, obs)[0]
                errors.append(avg_squared_error(est, truths)[0])
            errors = np.array(errors)
            rows.append(
                dict(method=method, n_samples=samples, avg_error=float(errors.mean()), variance=float(errors.var()), status="ok")
            )
    return rows


def cmd_shadow_bench(cfg: dict):
    n = cfg["n"] or 4
    if cfg["trials"] < 1:
        raise UsageError("--trials must be >= 1")
    methods = BENCH_METHODS if cfg["method"] == "all" else tuple(cfg["method"].split(","))
    bad = [m for m in methods if m not in BENCH_METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {bad}; choose from {BENCH_METHODS} or 'all'")
    if cfg["observables"]:
        obs = [check_pauli(p.strip(), n) for p in cfg["observables"].split(",")]
    elif n == 4:
        obs = permutation_orbit(BENCHMARK_FEATURES)
    else:
        obs = enumerate_k_local(n, cfg["k"] or 2)
    if not 0.0 <= cfg["p_noise"] <= 1.0:
        raise UsageError("--p-noise must lie in [0, 1]")
    rho = mix_white_noise(ghz_coherent(n, cfg["theta"], cfg["phi"]), cfg["p_noise"])
    rows = run_shadow_bench(rho, obs, cfg["samples_grid"], cfg["trials"], methods, cfg["epsilon"], cfg["seed"])
    out = Path(cfg["out"])
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        for r in rows:
            writer.writerow([r["method"], r["n_samples"], repr(r["avg_error"]), repr(r["variance"]), r["status"]])
    return EXIT_OK, [out], [], f"wrote {len(rows)} rows over {len(obs)} observables to {out}"


def cmd_oracle_check(cfg: dict):
    cls, target = cfg["state_class"], cfg["target"]
    if target == "chsh" and cls != "BELL":
        raise UsageError("the chsh target is defined for --class BELL only")
    start = time.perf_counter()
    threshold = noise_threshold(cls, target, tol=cfg["tol"])
    elapsed = time.perf_counter() - start
    report = {"class": cls, "target": target, "threshold": threshold, "tolerance": cfg["tol"]}
    out = Path(cfg["out"])
    dump_json(out, report)
    text = "NONE" if threshold is None else f"{threshold:.9f}"
    return EXIT_OK, [out], [], f"{cls} {target} threshold p_noise = {text} ({elapsed:.3f} s)"


COMMANDS = {
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "predict": cmd_predict,
    "shadow-bench": cmd_shadow_bench,
    "oracle-check": cmd_oracle_check,
}
PATH_KEYS = ("out", "dataset", "model", "features", "shadow", "save_shadow")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    shared.add_argument("--n", type=int, default=None, help="number of qubits")
    shared.add_argument("--k", type=int, default=None, help="Pauli locality bound")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="entangle-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", parents=[shared], help="synthesize a labeled feature dataset")
    g.add_argument("--out", default="dataset.jsonl")
    g.add_argument("--per-class", type=int, default=100)
    g.add_argument("--theta-range", type=parse_range, default=(0.0, math.pi / 3))
    g.add_argument("--phi-range", type=parse_range, default=(0.0, 0.6 * math.pi))
    g.add_argument("--p-range", type=parse_range, default=(0.0, 0.5), help="white noise for W / Bell states")
    g.add_argument("--ghz-p-range", type=parse_range, default=(0.0, 0.1), help="white noise for GHZ states")

    t = sub.add_parser("train", parents=[shared], help="train an SVM witness with feature elimination")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", default="model.json")
    t.add_argument("--gamma", type=float, default=None, help="RBF width (default 1/(d var X))")
    t.add_argument("--c", type=float, default=1.0, help="soft-margin penalty")
    t.add_argument("--tolerance", type=float, default=1e-3)
    t.add_argument("--max-passes", type=int, default=10_000)
    t.add_argument("--accuracy-floor", type=float, default=0.99)
    t.add_argument("--min-features", type=int, default=4)
    t.add_argument("--test-fraction", type=float, default=0.2)

    p = sub.add_parser("predict", parents=[shared], help="classify a state, feature file or shadow file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="verdict.json")
    p.add_argument("--state", choices=[c.value for c in StateClass])
    p.add_argument("--features", help="JSON object mapping Pauli strings to values")
    p.add_argument("--shadow", help="snapshot file, one 'BASES BITS' line per round")
    p.add_argument("--theta", type=parse_number, default=math.pi / 4)
    p.add_argument("--phi", type=parse_number, default=0.0)
    p.add_argument("--p-noise", type=parse_number, default=0.0)
    p.add_argument("--partition", type=parse_int_list, default=None, help="qubits of side A, e.g. 0,1")
    p.add_argument("--rounds", type=int, default=0, help="estimate features from this many simulated rounds")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=None)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--save-shadow", default=None)

    b = sub.add_parser("shadow-bench", parents=[shared], help="compare feature estimators")
    b.add_argument("--out", default="shadow_bench.csv")
    b.add_argument("--samples-grid", type=parse_int_list, default=[100, 400, 1600, 6400])
    b.add_argument("--trials", type=int, default=20)
    b.add_argument("--method", default="all")
    b.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    b.add_argument("--observables", default=None, help="comma-separated Pauli strings")
    b.add_argument("--theta", type=parse_number, default=math.pi / 4)
    b.add_argument("--phi", type=parse_number, default=0.0)
    b.add_argument("--p-noise", type=parse_number, default=0.05)

    o = sub.add_parser("oracle-check", parents=[shared], help="white-noise threshold of a baseline detector")
    o.add_argument("--class", dest="state_class", choices=ORACLE_CLASSES, required=True)
    o.add_argument("--target", choices=ORACLE_TARGETS, required=True)
    o.add_argument("--tol", type=float, default=1e-6)
    o.add_argument("--out", default="oracle_check.json")

    r = sub.add_parser("replay", help="re-run a command from its manifest and compare output digests")
    r.add_argument("manifest")
    r.add_argument("-v", "--verbose", action="store_true")
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "verbose"}
    if cfg["command"] == "predict":
        cfg["scheme_given"] = cfg["scheme"] is not None
        cfg["scheme"] = cfg["scheme"] or Scheme.RANDOMIZED.value
    for key in PATH_KEYS:
        if cfg.get(key):
            cfg[key] = str(Path(cfg[key]).resolve())
    for key, val in cfg.items():
        if isinstance(val, tuple):
            cfg[key] = list(val)
    return cfg


def manifest_path(out: str | Path) -> Path:
    return Path(str(out) + ".manifest.json")


def execute(cfg: dict) -> int:
    """Run one resolved command configuration and write its manifest."""
    handler = COMMANDS[cfg["command"]]
    start = time.perf_counter()
    try:
        code, outputs, inputs, summary = handler(cfg)
    except (UsageError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"entangle-lab {cfg['command']}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"entangle-lab {cfg['command']}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest = {
        "command": cfg["command"],
        "config": cfg,
        "seed": cfg.get("seed"),
        "version": __version__,
        "duration_s": round(time.perf_counter() - start, 3),
        "exit_code": code,
        "outputs": {str(p): sha256_file(p) for p in outputs},
        "inputs": {str(p): sha256_file(p) for p in inputs},
    }
    dump_json(manifest_path(cfg["out"]), manifest)
    print(summary)
    return code


def replay(manifest_file: str) -> int:
    manifest = load_json(manifest_file)
    before = manifest["outputs"]
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).exists() or sha256_file(path) != digest:
            print(f"input changed since the recorded run: {path}", file=sys.stderr)
    code = execute(manifest["config"])
    mismatched = [p for p, d in before.items() if not Path(p).exists() or sha256_file(p) != d]
    for p in before:
        print(f"{'DIFFERS' if p in mismatched else 'identical'} {p}")
    if mismatched:
        return EXIT_NUMERIC
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "replay":
        return replay(args.manifest)
    return execute(_resolve(args))


if __name__ == "__main__":
    sys.exit(main())
