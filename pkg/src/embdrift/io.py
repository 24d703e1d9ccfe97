"""Embedding files, model bundles and stream directories.

Binary embedding layout (little-endian)::

    magic      4 bytes  b"DLEM"
    version    uint32   1
    m          uint64   row count
    d          uint32   width
    labels     uint8    1 if a label block follows
    payload    m*d float32, row-major
    label ids  m uint32 (only when labels == 1)
"""

from __future__ import annotations

import base64
import csv
import io as _io
import json
import math
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import CorruptFile, FormatError, IntegrityWarning, InvalidInput, VersionError
from .offline import BaselineModel, OfflineConfig, ThresholdSet
from .stats import DistanceKind, EmbeddingBatch, GaussianSummary, PcaProjector

MAGIC = b"DLEM"
EMBEDDING_VERSION = 1
HEADER = struct.Struct("<4sIQIB")
BUNDLE_FORMAT = "embdrift-bundle"
BUNDLE_VERSION = 1

PathLike = Union[str, os.PathLike]


def atomic_write(path: PathLike, data: Union[bytes, str]) -> Path:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# -- embeddings ---------------------------------------------------------------

def encode_embeddings(batch: EmbeddingBatch) -> bytes:
    vectors = np.ascontiguousarray(batch.vectors, dtype="<f4")
    if not np.all(np.isfinite(vectors)):
        raise InvalidInput("embedding values overflow float32")
    has_labels = batch.has_labels
    parts = [HEADER.pack(MAGIC, EMBEDDING_VERSION, batch.m, batch.d, int(has_labels)), vectors.tobytes()]
    if has_labels:
        labels = batch.predicted_labels
        if labels.min() < 0 or labels.max() > np.iinfo(np.uint32).max:
            raise InvalidInput("label ids must fit in uint32")
        parts.append(labels.astype("<u4").tobytes())
    return b"".join(parts)


def decode_embeddings(raw: bytes, label_set: Optional[Sequence[int]] = None) -> EmbeddingBatch:
    if len(raw) < HEADER.size:
        raise CorruptFile("file is shorter than the embedding header")
    magic, version, m, d, label_flag = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != EMBEDDING_VERSION:
        raise FormatError(f"unsupported embedding format version {version}")
    if label_flag not in (0, 1):
        raise FormatError(f"bad label flag {label_flag}")
    expected = HEADER.size + 4 * m * d + (4 * m if label_flag else 0)
    if len(raw) < expected:
        raise CorruptFile(f"payload truncated: {len(raw)} bytes, header promises {expected}")
    if len(raw) > expected:
        raise CorruptFile(f"{len(raw) - expected} trailing bytes after payload")
    vectors = np.frombuffer(raw, dtype="<f4", count=m * d, offset=HEADER.size).reshape(m, d)
    labels = None
    if label_flag:
        labels = np.frombuffer(raw, dtype="<u4", count=m, offset=HEADER.size + 4 * m * d).astype(np.int64)
    if not np.all(np.isfinite(vectors)):
        raise InvalidInput("embedding file contains non-finite values")
    return EmbeddingBatch(vectors.astype(np.float32), labels, None if label_set is None else tuple(label_set))


def write_embeddings(path: PathLike, batch: EmbeddingBatch) -> Path:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return atomic_write(path, embeddings_to_csv(batch))
    return atomic_write(path, encode_embeddings(batch))


def read_embeddings(path: PathLike, label_set: Optional[Sequence[int]] = None) -> EmbeddingBatch:
    """Read a binary embedding file, or a CSV one when the name ends in ``.csv``."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return embeddings_from_csv(path.read_text(encoding="utf-8"), label_set)
    return decode_embeddings(path.read_bytes(), label_set)


def embeddings_to_csv(batch: EmbeddingBatch) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    header = [f"e{j}" for j in range(batch.d)] + (["label"] if batch.has_labels else [])
    writer.writerow(header)
    vectors = np.asarray(batch.vectors, dtype=np.float32)
    for i in range(batch.m):
        row = [repr(float(v)) for v in vectors[i]]
        if batch.has_labels:
            row.append(str(int(batch.predicted_labels[i])))
        writer.writerow(row)
    return buf.getvalue()


def embeddings_from_csv(text: str, label_set: Optional[Sequence[int]] = None) -> EmbeddingBatch:
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows:
        raise FormatError("empty CSV")
    header, body = rows[0], [r for r in rows[1:] if r]
    has_labels = bool(header) and header[-1].strip().lower() == "label"
    width = len(header) - int(has_labels)
    if width < 1 or not body:
        raise FormatError("CSV needs at least one embedding column and one data row")
    try:
        values = np.array([[float(v) for v in r[:width]] for r in body], dtype=np.float64)
        labels = np.array([int(r[width]) for r in body]) if has_labels else None
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed CSV row: {exc}") from None
    if any(len(r) != len(header) for r in body):
        raise FormatError("CSV rows have inconsistent widths")
    if not np.all(np.isfinite(values)):
        raise InvalidInput("CSV contains non-finite values")
    return EmbeddingBatch(values.astype(np.float32), labels, None if label_set is None else tuple(label_set))


# -- model bundles ------------------------------------------------------------

@dataclass
class ModelBundle:
    baseline: BaselineModel
    thresholds: Optional[ThresholdSet] = None
    metadata: Dict[str, object] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (self.baseline == other.baseline and self.thresholds == other.thresholds
                and self.metadata == other.metadata)


def _enc_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "f8le": base64.b64encode(arr.tobytes()).decode("ascii")}


def _dec_array(obj: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(obj["f8le"], validate=True)
        return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptFile(f"bad array record: {exc}") from None


def _enc_float(x: float):
    return "inf" if math.isinf(x) else float(x)


def _dec_float(x) -> float:
    return math.inf if x == "inf" else float(x)


def bundle_to_json(bundle: ModelBundle) -> str:
    b = bundle.baseline
    config = b.config.to_dict()
    doc = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "metadata": dict(bundle.metadata),
        "config_hash": b.config.config_hash(),
        "config": config,
        "baseline": {
            "label_set": list(b.label_set),
            "batch_pca": {"center": _enc_array(b.batch_pca.center),
                          "components": _enc_array(b.batch_pca.components)},
            "batch_gaussian": {"mean": _enc_array(b.batch_gaussian.mean),
                               "covariance": _enc_array(b.batch_gaussian.covariance),
                               "sample_count": b.batch_gaussian.sample_count},
            "labels": [
                {"label": label,
                 "pca": {"center": _enc_array(b.label_pca[label].center),
                         "components": _enc_array(b.label_pca[label].components)},
                 "gaussian": {"mean": _enc_array(b.label_gaussian[label].mean),
                              "covariance": _enc_array(b.label_gaussian[label].covariance),
                              "sample_count": b.label_gaussian[label].sample_count}}
                for label in b.label_set
            ],
        },
        "thresholds": None,
    }
    t = bundle.thresholds
    if t is not None:
        doc["thresholds"] = {
            "t_batch": _enc_float(t.t_batch),
            "t_label": [[label, _enc_float(t.t_label[label])] for label in b.label_set],
            "n_th": t.n_th, "t_alpha": t.t_alpha, "m_w": t.m_w, "metric": t.metric.value,
        }
    return json.dumps(doc, indent=1, sort_keys=True)


def bundle_from_json(text: str) -> ModelBundle:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != BUNDLE_FORMAT:
        raise CorruptFile("not an embdrift model bundle")
    if doc.get("version") != BUNDLE_VERSION:
        raise VersionError(f"model bundle version {doc.get('version')} != supported {BUNDLE_VERSION}")
    try:
        config = OfflineConfig.from_dict(doc["config"])
        metadata = dict(doc.get("metadata", {}))
        if doc.get("config_hash") != config.config_hash():
            warnings.warn("model bundle config hash does not match its config; the file may "
                          "have been edited", IntegrityWarning)
        base = doc["baseline"]
        label_set = tuple(int(v) for v in base["label_set"])

        def gaussian(g):
            return GaussianSummary(_dec_array(g["mean"]), _dec_array(g["covariance"]), g["sample_count"])

        def pca(p):
            return PcaProjector(_dec_array(p["center"]), _dec_array(p["components"]))

        by_label = {int(e["label"]): e for e in base["labels"]}
        baseline = BaselineModel(
            label_set,
            pca(base["batch_pca"]),
            gaussian(base["batch_gaussian"]),
            {l: pca(by_label[l]["pca"]) for l in label_set},
            {l: gaussian(by_label[l]["gaussian"]) for l in label_set},
            config,
        )
        thresholds = None
        if doc.get("thresholds") is not None:
            t = doc["thresholds"]
            thresholds = ThresholdSet(
                _dec_float(t["t_batch"]),
                {int(l): _dec_float(v) for l, v in t["t_label"]},
                int(t["n_th"]), float(t["t_alpha"]), int(t["m_w"]), DistanceKind.parse(t["metric"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (VersionError, CorruptFile)):
            raise
        raise CorruptFile(f"model bundle is incomplete or malformed: {exc}") from None
    return ModelBundle(baseline, thresholds, metadata)


def save_bundle(path: PathLike, bundle: ModelBundle) -> Path:
    return atomic_write(path, bundle_to_json(bundle))


def load_bundle(path: PathLike) -> ModelBundle:
    return bundle_from_json(Path(path).read_text(encoding="utf-8"))


# -- stream directories ---------------------------------------------------------

MANIFEST = "manifest.json"


@dataclass
class StreamEntry:
    path: Path
    timestamp: Optional[str] = None
    drift_percent: Optional[float] = None
    truth: Optional[bool] = None


def list_stream(source: Union[PathLike, Sequence[PathLike]]) -> List[StreamEntry]:
    """Window files of a stream, in order.

    ``source`` is either a directory (window files in lexicographic order,
    with optional ``manifest.json`` supplying timestamps and truth flags) or
    an explicit list of files.
    """
    if isinstance(source, (str, os.PathLike)):
        root = Path(source)
        if root.is_dir():
            manifest = root / MANIFEST
            if manifest.exists():
                doc = json.loads(manifest.read_text(encoding="utf-8"))
                return [StreamEntry(root / w["file"], w.get("timestamp"), w.get("drift_percent"),
                                    w.get("truth")) for w in doc["windows"]]
            files = sorted(p for p in root.iterdir()
                           if p.is_file() and p.suffix.lower() in (".dlem", ".bin", ".csv"))
            return [StreamEntry(p) for p in files]
        source = [root]
    return [StreamEntry(Path(p)) for p in source]


def write_stream(directory: PathLike, windows: Sequence[EmbeddingBatch],
                 percents: Optional[Sequence[float]] = None,
                 timestamps: Optional[Sequence[str]] = None,
                 extra: Optional[dict] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(windows))))
    records = []
    for i, window in enumerate(windows):
        name = f"window_{i + 1:0{width}d}.dlem"
        write_embeddings(directory / name, window)
        rec = {"file": name}
        if timestamps is not None:
            rec["timestamp"] = timestamps[i]
        if percents is not None:
            rec["drift_percent"] = float(percents[i])
            rec["truth"] = bool(percents[i] > 0)
        records.append(rec)
    doc = {"windows": records, **(extra or {})}
    atomic_write(directory / MANIFEST, json.dumps(doc, indent=1, sort_keys=True))
    return directory
