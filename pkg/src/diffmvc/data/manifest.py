"""Dataset manifests: a JSON file naming view files, optional labels, and eta."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataset import MultiViewDataset
from .idx import LABEL_MAGIC, load_idx
from .matfile import TAG, load_matrix


class ManifestError(ValueError):
    pass


def _load_features(path: Path) -> np.ndarray:
    head = path.read_bytes()[:8] if path.exists() else b""
    if head[:8] == TAG:
        return load_matrix(path)
    return load_idx(path)


def _load_labels(path: Path) -> np.ndarray:
    head = path.read_bytes()[:8]
    if head[:8] == TAG:
        return load_matrix(path).reshape(-1).astype(np.int64)
    if len(head) >= 4 and int.from_bytes(head[:4], "big") == LABEL_MAGIC:
        return load_idx(path).astype(np.int64)
    # fall back to one integer per line
    return np.array([int(line) for line in path.read_text().split()], dtype=np.int64)


def load_manifest(path) -> tuple[MultiViewDataset, float]:
    """Returns the dataset and the manifest's missing rate eta."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: malformed manifest ({e})") from e
    if "views" not in doc or len(doc["views"]) < 2:
        raise ManifestError(f"{path}: manifest must name at least two view files")

    base = path.parent
    views = [_load_features(base / v) for v in doc["views"]]
    labels = None
    if doc.get("labels"):
        labels = _load_labels(base / doc["labels"])
    eta = float(doc.get("eta", 0.0))
    return MultiViewDataset(views=views, labels=labels), eta


def save_manifest(path, view_files: list[str], label_file: str | None, eta: float) -> None:
    doc = {"views": list(view_files), "labels": label_file, "eta": eta}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
