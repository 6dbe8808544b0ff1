"""File formats: JSON-lines datasets, JSON models and manifests, shadow text files."""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from .shadows import Scheme, ShadowSet, Snapshot
from .states import StateRecord
from .svm import SvmModel

DATASET_KEYS = ("class", "label", "seed", "theta", "phi", "p_noise", "partition", "features")


def record_to_row(record: StateRecord) -> dict:
    if record.features is None:
        raise ValueError("record has no features attached")
    return {
        "class": record.class_tag.value,
        "label": int(record.label),
        "seed": int(record.seed),
        "theta": record.noise.theta,
        "phi": record.noise.phi,
        "p_noise": record.noise.p_noise,
        "partition": list(record.partition.part_a) if record.partition else None,
        "features": [float(v) for v in record.features],
    }


def write_dataset(path: str | Path, records: Iterable[StateRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_row(rec)) + "\n")


def read_dataset(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            missing = [k for k in DATASET_KEYS if k not in row]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing keys {missing}")
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    return rows


def dataset_arrays(rows: Sequence[dict]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([r["features"] for r in rows], dtype=float)
    y = np.array([r["label"] for r in rows], dtype=int)
    return x, y


def dump_json(path: str | Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_json(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_model(path: str | Path, model: SvmModel) -> None:
    dump_json(path, model.to_dict())


def load_model(path: str | Path) -> SvmModel:
    return SvmModel.from_dict(load_json(path))


def write_shadow(path: str | Path, shadow: ShadowSet) -> None:
    """One ``BASES BITS`` line per snapshot, after a ``# scheme=...`` comment."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# scheme={shadow.scheme.value}\n")
        for snap in shadow.snapshots:
            fh.write(f"{snap.bases} {snap.bits}\n")


def read_shadow(path: str | Path, scheme: Scheme | str | None = None) -> ShadowSet:
    found = None
    snaps = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().startswith("scheme="):
                    found = line.split("=", 1)[1].strip()
                continue
            parts = line.split()
            if len(parts) != 2 or len(parts[0]) != len(parts[1]):
                raise ValueError(f"{path}:{lineno}: expected 'BASES BITS', got {line!r}")
            snaps.append(Snapshot(parts[0], parts[1]))
    if not snaps:
        raise ValueError(f"{path}: no snapshots")
    return ShadowSet.from_snapshots(snaps, Scheme(scheme or found or Scheme.RANDOMIZED))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
