import csv
import json
import math

import numpy as np
import pytest

from entangle_lab import cli
from entangle_lab.io import read_shadow, save_model, sha256_file, write_shadow
from entangle_lab.pauli import enumerate_k_local
from entangle_lab.shadows import Scheme, ShadowSet, Snapshot


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    out = d / "d.jsonl"
    assert run("gen-dataset", "--per-class", 100, "--seed", 7, "--out", out) == 0
    return out


@pytest.fixture
def model_file(tmp_path, desk_model):
    path = tmp_path / "model.json"
    save_model(path, desk_model)
    return path


def test_parse_number_forms():
    assert cli.parse_number("0.5") == 0.5
    assert cli.parse_number("pi/3") == pytest.approx(math.pi / 3)
    assert cli.parse_number("0.55pi") == pytest.approx(0.55 * math.pi)
    assert cli.parse_number("2*pi/3") == pytest.approx(2 * math.pi / 3)
    assert cli.parse_range("0,pi/3") == pytest.approx((0, math.pi / 3))
    assert cli.parse_int_list("100,400") == [100, 400]
    for bad in ("abc", "1,2,3"):
        with pytest.raises(Exception):
            cli.parse_range(bad)


def test_gen_dataset_shape_and_manifest(small_dataset):
    lines = small_dataset.read_text().splitlines()
    assert len(lines) == 400
    rows = [json.loads(line) for line in lines]
    assert all(list(r) == ["class", "label", "seed", "theta", "phi", "p_noise", "partition", "features"] for r in rows)
    assert all(len(r["features"]) == 66 for r in rows)
    assert {r["class"] for r in rows} == {"GHZ_NOISY", "W_NOISY", "SEPARABLE"}
    manifest = json.loads(cli.manifest_path(small_dataset).read_text())
    cfg = manifest["config"]
    assert cfg["theta_range"] == pytest.approx([0, math.pi / 3])
    assert cfg["phi_range"] == pytest.approx([0, 0.6 * math.pi])
    assert cfg["ghz_p_range"] == [0, 0.1] and cfg["p_range"] == [0, 0.5]
    assert manifest["outputs"][str(small_dataset)] == sha256_file(small_dataset)
    assert manifest["version"] and manifest["seed"] == 7 and "duration_s" in manifest


def test_gen_dataset_byte_identical(tmp_path, small_dataset):
    again = tmp_path / "again.jsonl"
    assert run("gen-dataset", "--per-class", 100, "--seed", 7, "--out", again) == 0
    assert again.read_bytes() == small_dataset.read_bytes()
    other = tmp_path / "other.jsonl"
    assert run("gen-dataset", "--per-class", 100, "--seed", 8, "--out", other) == 0
    assert other.read_bytes() != small_dataset.read_bytes()


def test_gen_dataset_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("gen-dataset", "--theta-range", "1", "--out", tmp_path / "x.jsonl")
    assert exc.value.code == 2
    assert run("gen-dataset", "--p-range", "0,1.5", "--out", tmp_path / "x.jsonl") == 2
    assert run("gen-dataset", "--per-class", 0, "--out", tmp_path / "x.jsonl") == 2


def test_gen_dataset_two_qubits(tmp_path):
    out = tmp_path / "bell.jsonl"
    assert run("gen-dataset", "--n", 2, "--k", 2, "--per-class", 5, "--p-range", "0,1/3", "--out", out) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 10 and len(rows[0]["features"]) == len(enumerate_k_local(2, 2))
    assert {r["class"] for r in rows} == {"BELL_NOISY", "SEPARABLE"}


def test_train_writes_model_and_metrics(tmp_path, small_dataset):
    out = tmp_path / "m.json"
    code = run("train", "--dataset", small_dataset, "--out", out, "--accuracy-floor", 0.98)
    assert code == 0
    model = json.loads(out.read_text())
    assert model["n_qubits"] == 4 and len(model["observables"]) == len(model["support_vectors"][0])
    metrics = json.loads(out.with_suffix(".metrics.json").read_text())
    assert metrics["floor_met"] and metrics["train_accuracy"] >= 0.98
    assert metrics["orbit_size"] <= 7 * len(metrics["selected"]) and len(metrics["selected"]) >= 4
    assert metrics["n_train"] == 320 and metrics["n_test"] == 80

    full = tmp_path / "full.json"
    assert run("train", "--dataset", small_dataset, "--out", full, "--accuracy-floor", 0.98, "--min-features", 66) == 0
    full_metrics = json.loads(full.with_suffix(".metrics.json").read_text())
    assert len(full_metrics["selected"]) == 66
    assert full_metrics["train_accuracy"] >= metrics["train_accuracy"]


def test_train_floor_unmet_exit_code(tmp_path, small_dataset):
    out = tmp_path / "m.json"
    assert run("train", "--dataset", small_dataset, "--out", out, "--accuracy-floor", 1.0, "--c", 0.001) == 3
    assert out.exists()
    assert not json.loads(out.with_suffix(".metrics.json").read_text())["floor_met"]


def test_train_shape_mismatch(tmp_path, small_dataset):
    assert run("train", "--dataset", small_dataset, "--n", 4, "--k", 1, "--out", tmp_path / "m.json") == 2
    assert run("train", "--dataset", tmp_path / "missing.jsonl", "--out", tmp_path / "m.json") == 2


def _verdict(path):
    return json.loads(path.read_text())


def test_predict_examples(tmp_path, model_file):
    out = tmp_path / "v.json"
    assert run("predict", "--model", model_file, "--state", "GHZ_NOISY", "--theta", "pi/3", "--phi", "0.55pi", "--out", out) == 0
    rep = _verdict(out)
    assert rep["verdict"] == "ENTANGLED" and len(rep["per_permutation"]) == 7
    assert rep["ppt"]["npt_all"] and rep["ppt_agrees"]
    assert rep["fidelity_witness"]["GHZ"] >= 0  # the projector witness misses this state

    assert run("predict", "--model", model_file, "--state", "W_NOISY", "--p-noise", 0.5, "--out", out) == 0
    assert _verdict(out)["verdict"] == "ENTANGLED"

    assert run("predict", "--model", model_file, "--state", "SEPARABLE", "--partition", "0,1", "--seed", 3, "--out", out) == 0
    rep = _verdict(out)
    assert rep["verdict"] == "SEPARABLE" and rep["ppt"]["per_partition"]["01|23"] >= -1e-9


def test_predict_feature_file(tmp_path, model_file, desk_model):
    out = tmp_path / "v.json"
    assert run("predict", "--model", model_file, "--state", "GHZ_NOISY", "--out", out) == 0
    feats = tmp_path / "f.json"
    rep = _verdict(out)
    # rebuild a feature file from the exact GHZ4 values
    from entangle_lab.pauli import expectations
    from entangle_lab.qcore import ket_to_dm
    from entangle_lab.states import ghz

    needed = sorted({p for row in cli.orbit_features(desk_model.observables, cli.transposition_perms(4)) for p in row})
    feats.write_text(json.dumps(dict(zip(needed, map(float, expectations(ket_to_dm(ghz(4)), needed))))))
    out2 = tmp_path / "v2.json"
    assert run("predict", "--model", model_file, "--features", feats, "--out", out2) == 0
    assert _verdict(out2)["per_permutation"] == rep["per_permutation"]
    partial = dict(list(json.loads(feats.read_text()).items())[1:])
    feats.write_text(json.dumps(partial))
    assert run("predict", "--model", model_file, "--features", feats, "--out", out2) == 2


def test_predict_needs_exactly_one_input(tmp_path, model_file):
    assert run("predict", "--model", model_file, "--out", tmp_path / "v.json") == 2


def test_predict_via_shadow_round_trip(tmp_path, model_file):
    out, shadow = tmp_path / "v.json", tmp_path / "s.txt"
    code = run(
        "predict", "--model", model_file, "--state", "GHZ_NOISY", "--rounds", 4000,
        "--scheme", "DERANDOMIZED", "--save-shadow", shadow, "--out", out,
    )
    assert code == 0
    direct = _verdict(out)
    assert direct["verdict"] == "ENTANGLED" and direct["never_hit"] == []
    first = shadow.read_text().splitlines()[:2]
    assert first[0] == "# scheme=DERANDOMIZED" and len(first[1].split()[0]) == 4
    out2 = tmp_path / "v2.json"
    assert run("predict", "--model", model_file, "--shadow", shadow, "--out", out2) == 0
    again = _verdict(out2)
    assert again["scheme"] == "DERANDOMIZED"
    assert [r["decision_value"] for r in again["per_permutation"]] == [r["decision_value"] for r in direct["per_permutation"]]


def test_shadow_file_round_trip(tmp_path):
    snaps = [Snapshot("XZYZ", "0110"), Snapshot("ZZZZ", "0000")]
    s = ShadowSet.from_snapshots(snaps, Scheme.RANDOMIZED)
    path = tmp_path / "s.txt"
    write_shadow(path, s)
    assert path.read_text().splitlines()[1] == "XZYZ 0110"
    back = read_shadow(path)
    assert back.snapshots == snaps and back.scheme is Scheme.RANDOMIZED
    assert read_shadow(path, "DERANDOMIZED").scheme is Scheme.DERANDOMIZED
    path.write_text("XZ 011\n")
    with pytest.raises(ValueError):
        read_shadow(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_shadow_bench_schema(tmp_path):
    out = tmp_path / "b.csv"
    assert run("shadow-bench", "--samples-grid", "10,100", "--trials", 3, "--out", out) == 0
    rows = _read_csv(out)
    assert rows[0] == ["method", "n_samples", "avg_error", "variance", "status"]
    body = {(r[0], int(r[1])): r for r in rows[1:]}
    assert len(body) == 6
    assert body[("independent", 10)][4] == "unsupported"
    for r in rows[1:]:
        if r[4] == "ok":
            assert float(r[2]) >= 0 and float(r[3]) >= 0 and "," not in r[2]
    assert run("shadow-bench", "--method", "bogus", "--out", out) == 2


def test_shadow_bench_large_budget_is_accurate(tmp_path):
    out = tmp_path / "b.csv"
    assert run("shadow-bench", "--samples-grid", "100000", "--trials", 2, "--out", out) == 0
    for r in _read_csv(out)[1:]:
        assert r[4] == "ok" and float(r[2]) < 1e-2


@pytest.mark.parametrize(
    "cls,target,expected,tol",
    [("GHZ3", "witness", 4 / 7, 1e-5), ("W3", "witness", 8 / 21, 1e-5), ("GHZ3", "ppt", 0.8, 1e-3)],
)
def test_oracle_check_examples(tmp_path, cls, target, expected, tol):
    out = tmp_path / "o.json"
    assert run("oracle-check", "--class", cls, "--target", target, "--out", out) == 0
    assert _verdict(out)["threshold"] == pytest.approx(expected, abs=tol)


def test_oracle_check_none_and_errors(tmp_path, capsys, monkeypatch):
    out = tmp_path / "o.json"
    # every shipped detector changes sign on [0, 1]; force the no-sign-change path
    monkeypatch.setattr(cli, "noise_threshold", lambda *a, **k: None)
    assert run("oracle-check", "--class", "W3", "--target", "ppt", "--out", out) == 0
    assert _verdict(out)["threshold"] is None
    assert "NONE" in capsys.readouterr().out
    assert run("oracle-check", "--class", "GHZ3", "--target", "chsh", "--out", out) == 2
    with pytest.raises(SystemExit):
        run("oracle-check", "--class", "GHZ9", "--target", "ppt", "--out", out)


def test_replay_every_command(tmp_path, small_dataset, model_file, capsys):
    cases = [
        ("gen-dataset", "--per-class", 5, "--seed", 2, "--out", tmp_path / "d.jsonl"),
        ("train", "--dataset", small_dataset, "--accuracy-floor", 0.98, "--out", tmp_path / "m.json"),
        ("predict", "--model", model_file, "--state", "W_NOISY", "--p-noise", 0.2, "--rounds", 500,
         "--save-shadow", tmp_path / "s.txt", "--out", tmp_path / "v.json"),
        ("shadow-bench", "--samples-grid", "50,200", "--trials", 2, "--out", tmp_path / "b.csv"),
        ("oracle-check", "--class", "W4", "--target", "witness", "--out", tmp_path / "o.json"),
    ]
    for argv in cases:
        assert run(*argv) == 0
        out = argv[-1]
        manifest = cli.manifest_path(out)
        before = {p: sha256_file(p) for p in json.loads(manifest.read_text())["outputs"]}
        assert run("replay", manifest) == 0
        after = {p: sha256_file(p) for p in before}
        assert after == before
    assert "DIFFERS" not in capsys.readouterr().out


def test_replay_detects_changed_output(tmp_path):
    out = tmp_path / "o.json"
    assert run("oracle-check", "--class", "GHZ3", "--target", "witness", "--tol", 1e-3, "--out", out) == 0
    manifest = json.loads(cli.manifest_path(out).read_text())
    manifest["config"]["tol"] = 1e-6
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(manifest))
    assert run("replay", tampered) == 4


def test_bench_rows_reproducible():
    from entangle_lab.qcore import ket_to_dm
    from entangle_lab.states import ghz

    rho = ket_to_dm(ghz(4))
    obs = ["IIZZ", "XXXX"]
    a = cli.run_shadow_bench(rho, obs, [50], 3, seed=4)
    b = cli.run_shadow_bench(rho, obs, [50], 3, seed=4)
    assert a == b
    assert all(np.isfinite(r["avg_error"]) for r in a)
