"""Datasets: embedding files, scene graphs, KG triples, planted synthetics.

File conventions
----------------
* Embeddings: ``<name>.manifest`` (JSON: dim, count, ids, modalities,
  pairing) plus ``<name>.f32bin`` (little-endian float32, row-major, no
  header, rows in manifest id order).
* Labeled feature sets reuse the same pair of files with ``labels`` and
  ``stage_tag`` fields in the manifest.
* Scene graphs: JSON lines, one image per line.
* KG triples: tab-separated ``head<TAB>relation<TAB>tail``, UTF-8.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from alignlab.errors import ConfigError, FormatError, ShapeMismatchError

MODALITIES = ("image", "text")
STAGE_TAGS = ("pre_projector", "post_projector")

# Planted-dataset geometry: class anchors live on the first n_classes
# coordinates, per-pair latent jitter on the remaining ones, and the image
# side is spun by a random orthogonal map so the raw spaces start
# misaligned while rotate-back recovery stays exact.
ANCHOR_SCALE = 1.0
LATENT_JITTER = 1.0


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    modality: str
    vector: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ConfigError(f"unknown modality {self.modality!r}")


@dataclass
class DatasetManifest:
    dim: int
    count: int
    ids: list[str]
    modalities: list[str]
    pairing: dict[str, str] | None = None

    def validate(self) -> None:
        if len(self.ids) != self.count:
            raise FormatError(
                f"manifest: {len(self.ids)} ids but count={self.count}"
            )
        if len(self.modalities) != self.count:
            raise FormatError("manifest: modalities length != count")
        if len(set(self.ids)) != len(self.ids):
            raise FormatError("manifest: duplicate ids")
        if self.pairing:
            known = set(self.ids)
            for k, v in self.pairing.items():
                if k not in known or v not in known:
                    raise FormatError(f"manifest: pairing entry ({k}, {v}) not in ids")


def save_embeddings(prefix, records: list[EmbeddingRecord],
                    pairing: dict[str, str] | None = None) -> DatasetManifest:
    prefix = Path(prefix)
    dims = {r.vector.shape[0] for r in records} if records else set()
    if len(dims) > 1:
        raise ShapeMismatchError(f"records have mixed dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    manifest = DatasetManifest(
        dim=dim,
        count=len(records),
        ids=[r.id for r in records],
        modalities=[r.modality for r in records],
        pairing=pairing,
    )
    manifest.validate()
    data = np.stack([r.vector for r in records]) if records else np.zeros((0, dim))
    prefix.with_suffix(".f32bin").write_bytes(
        np.ascontiguousarray(data, dtype="<f4").tobytes()
    )
    _write_manifest(prefix, manifest.__dict__)
    return manifest


def load_embeddings(prefix) -> tuple[DatasetManifest, list[EmbeddingRecord]]:
    prefix = Path(prefix)
    raw = _read_manifest(prefix)
    try:
        manifest = DatasetManifest(
            dim=int(raw["dim"]),
            count=int(raw["count"]),
            ids=list(raw["ids"]),
            modalities=list(raw["modalities"]),
            pairing=raw.get("pairing"),
        )
    except KeyError as e:
        raise FormatError(f"manifest {prefix}: missing field {e}") from e
    manifest.validate()
    data = _read_f32bin(prefix, manifest.count, manifest.dim)
    records = [
        EmbeddingRecord(id=i, modality=m, vector=data[k])
        for k, (i, m) in enumerate(zip(manifest.ids, manifest.modalities))
    ]
    return manifest, records


def _write_manifest(prefix: Path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    prefix.with_suffix(".manifest").write_text(text + "\n", encoding="utf-8")


def _read_manifest(prefix: Path) -> dict:
    path = prefix.with_suffix(".manifest")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest {path}: invalid JSON ({e})") from e


def _read_f32bin(prefix: Path, count: int, dim: int) -> np.ndarray:
    path = prefix.with_suffix(".f32bin")
    blob = path.read_bytes()
    expected = count * dim * 4
    if len(blob) != expected:
        raise FormatError(
            f"{path}: expected {expected} payload bytes "
            f"({count}x{dim} float32), found {len(blob)}"
        )
    flat = np.frombuffer(blob, dtype="<f4")
    return flat.reshape(count, dim).astype(np.float64)


# --------------------------------------------------------------------------
# labeled feature sets (probe inputs)


@dataclass
class LabeledFeatureSet:
    features: np.ndarray
    labels: np.ndarray
    stage_tag: str
    ids: list[str] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeMismatchError("features must be 2-d")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeMismatchError(
                f"{self.features.shape[0]} feature rows vs "
                f"{self.labels.shape[0]} labels"
            )
        if self.stage_tag not in STAGE_TAGS:
            raise ConfigError(f"unknown stage_tag {self.stage_tag!r}")
        if self.labels.size and self.labels.min() < 0:
            raise ConfigError("labels must be nonnegative class ids")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def save_labeled_features(prefix, fs: LabeledFeatureSet) -> None:
    prefix = Path(prefix)
    ids = fs.ids or [f"row{k:06d}" for k in range(fs.n)]
    payload = {
        "dim": fs.dim,
        "count": fs.n,
        "ids": ids,
        "labels": fs.labels.tolist(),
        "stage_tag": fs.stage_tag,
    }
    prefix.with_suffix(".f32bin").write_bytes(
        np.ascontiguousarray(fs.features, dtype="<f4").tobytes()
    )
    _write_manifest(prefix, payload)


def load_labeled_features(prefix) -> LabeledFeatureSet:
    prefix = Path(prefix)
    raw = _read_manifest(prefix)
    for key in ("dim", "count", "labels", "stage_tag"):
        if key not in raw:
            raise FormatError(f"labeled-feature manifest {prefix}: missing {key!r}")
    feats = _read_f32bin(prefix, int(raw["count"]), int(raw["dim"]))
    return LabeledFeatureSet(
        features=feats,
        labels=np.asarray(raw["labels"], dtype=np.int64),
        stage_tag=raw["stage_tag"],
        ids=list(raw["ids"]) if "ids" in raw else None,
    )


# --------------------------------------------------------------------------
# scene graphs


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    name: str
    attributes: tuple[str, ...]
    bbox: tuple[float, float, float, float]


@dataclass(frozen=True)
class SceneRelation:
    subject_id: str
    predicate: str
    object_id: str


@dataclass
class SceneGraph:
    image_id: str
    objects: list[SceneObject]
    relations: list[SceneRelation] = field(default_factory=list)

    def __post_init__(self):
        ids = {o.object_id for o in self.objects}
        if len(ids) != len(self.objects):
            raise FormatError(f"scene graph {self.image_id}: duplicate object ids")
        for o in self.objects:
            x, y, w, h = o.bbox
            if x < 0 or y < 0 or w <= 0 or h <= 0:
                raise FormatError(
                    f"scene graph {self.image_id}: bad bbox {o.bbox} on {o.object_id}"
                )
        for r in self.relations:
            if r.subject_id not in ids or r.object_id not in ids:
                raise FormatError(
                    f"scene graph {self.image_id}: relation references "
                    f"unknown object ({r.subject_id}, {r.predicate}, {r.object_id})"
                )

    def object_names(self) -> set[str]:
        return {o.name for o in self.objects}

    def by_id(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)


def save_scene_graphs(path, graphs: list[SceneGraph]) -> None:
    lines = []
    for g in graphs:
        lines.append(json.dumps({
            "image_id": g.image_id,
            "objects": [
                {"object_id": o.object_id, "name": o.name,
                 "attributes": list(o.attributes), "bbox": list(o.bbox)}
                for o in g.objects
            ],
            "relations": [
                {"subject_id": r.subject_id, "predicate": r.predicate,
                 "object_id": r.object_id}
                for r in g.relations
            ],
        }, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_scene_graphs(path) -> list[SceneGraph]:
    graphs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            graphs.append(SceneGraph(
                image_id=raw["image_id"],
                objects=[
                    SceneObject(
                        object_id=o["object_id"], name=o["name"],
                        attributes=tuple(o.get("attributes", [])),
                        bbox=tuple(o["bbox"]),
                    )
                    for o in raw.get("objects", [])
                ],
                relations=[
                    SceneRelation(r["subject_id"], r["predicate"], r["object_id"])
                    for r in raw.get("relations", [])
                ],
            ))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise FormatError(f"{path}:{lineno}: bad scene-graph record ({e})") from e
    return graphs


# --------------------------------------------------------------------------
# knowledge-graph triples


@dataclass(frozen=True)
class KGTriple:
    head: str
    relation: str
    tail: str

    def __post_init__(self):
        if not (self.head and self.relation and self.tail):
            raise FormatError(f"KG triple with empty field: {self!r}")


def save_kg_triples(path, triples: list[KGTriple]) -> None:
    lines = [f"{t.head}\t{t.relation}\t{t.tail}" for t in triples]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_kg_triples(path) -> list[KGTriple]:
    triples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        triples.append(KGTriple(*parts))
    return triples


# --------------------------------------------------------------------------
# planted synthetic datasets


@dataclass
class PlantedDataset:
    """Paired image/text embeddings with a recoverable alignment.

    `records` holds image rows then text rows; `latents` is the shared
    pre-noise latent per pair with its class label (the linear-probe
    ground truth; label information lives in `label_dims`). `rotation`
    is the orthogonal map applied to the image side only.
    """
    manifest: DatasetManifest
    records: list[EmbeddingRecord]
    latents: LabeledFeatureSet
    rotation: np.ndarray
    label_dims: tuple[int, ...]

    def image_matrix(self) -> np.ndarray:
        return np.stack([r.vector for r in self.records if r.modality == "image"])

    def text_matrix(self) -> np.ndarray:
        return np.stack([r.vector for r in self.records if r.modality == "text"])


def _random_rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def _f32_exact(a: np.ndarray) -> np.ndarray:
    # Snap to float32-representable values so save -> load round-trips
    # exactly and reruns are byte-identical.
    return a.astype(np.float32).astype(np.float64)


def synth_planted_dataset(seed: int, n_pairs: int, dim: int,
                          noise_sigma: float, n_classes: int = 4) -> PlantedDataset:
    """Generate paired image/text embeddings with known structure.

    Pair k shares a latent (class anchor on coordinate c_k plus jitter on
    the non-class coordinates); each side adds independent Gaussian noise
    of scale `noise_sigma`, and the image side is rotated by a fixed
    random orthogonal matrix. Raw image/text cosines therefore hover near
    zero while an inverse rotation (the projector's target) realigns them.
    """
    if n_classes < 2:
        raise ConfigError("n_classes must be >= 2")
    if dim < n_classes + 2:
        raise ConfigError(f"dim must be >= n_classes + 2 (got dim={dim}, n_classes={n_classes})")
    if n_pairs < 2 * n_classes:
        raise ConfigError(f"n_pairs must be >= 2*n_classes (got {n_pairs})")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be >= 0")

    rng = np.random.default_rng(seed)
    rotation = _random_rotation(rng, dim)
    labels = np.arange(n_pairs, dtype=np.int64) % n_classes

    latents = np.zeros((n_pairs, dim))
    latents[np.arange(n_pairs), labels] = ANCHOR_SCALE
    latents[:, n_classes:] = LATENT_JITTER * rng.standard_normal((n_pairs, dim - n_classes))

    img = (latents + noise_sigma * rng.standard_normal((n_pairs, dim))) @ rotation.T
    txt = latents + noise_sigma * rng.standard_normal((n_pairs, dim))
    img, txt, latents = _f32_exact(img), _f32_exact(txt), _f32_exact(latents)

    records = [
        EmbeddingRecord(id=f"img{k:05d}", modality="image", vector=img[k])
        for k in range(n_pairs)
    ] + [
        EmbeddingRecord(id=f"txt{k:05d}", modality="text", vector=txt[k])
        for k in range(n_pairs)
    ]
    pairing = {f"img{k:05d}": f"txt{k:05d}" for k in range(n_pairs)}
    manifest = DatasetManifest(
        dim=dim,
        count=2 * n_pairs,
        ids=[r.id for r in records],
        modalities=[r.modality for r in records],
        pairing=pairing,
    )
    manifest.validate()
    ground_truth = LabeledFeatureSet(
        features=latents, labels=labels, stage_tag="pre_projector",
        ids=[f"img{k:05d}" for k in range(n_pairs)],
    )
    return PlantedDataset(
        manifest=manifest, records=records, latents=ground_truth,
        rotation=rotation, label_dims=tuple(range(n_classes)),
    )
