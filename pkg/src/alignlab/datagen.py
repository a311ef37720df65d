"""Negative-caption generation, co-occurrence statistics, and region
instruction data.

Caption edits are rule-based templates with every edit recorded, so the
whole pipeline is deterministic and the planted perturbations can be
verified mechanically. Insertion appends an ", along with ..." clause;
removal deletes annotated object spans plus their articles/conjunctions
and re-normalizes the punctuation.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from alignlab.datastore import SceneGraph
from alignlab.errors import ConfigError, FormatError, InsufficientDataError
from alignlab.text import (
    capitalize_first,
    contains_word,
    normalize_spacing,
    with_article,
)

SAMPLING_MODES = ("random", "popular", "adversarial")
INSERT_STRATEGIES = ("insert_random", "insert_popular", "insert_adversarial")
REGION_PROMPT = "Please caption the content in the bounding box"


# --------------------------------------------------------------------------
# co-occurrence statistics


@dataclass
class CooccurrenceTable:
    """Presence counts per object and per unordered object pair."""

    object_counts: dict[str, int] = field(default_factory=dict)
    pair_counts: dict[tuple[str, str], int] = field(default_factory=dict)
    corpus_size: int = 0

    def pair_count(self, a: str, b: str) -> int:
        return self.pair_counts.get((min(a, b), max(a, b)), 0)


def _names_of(item) -> set[str]:
    if isinstance(item, SceneGraph):
        return item.object_names()
    return set(item)


def build_cooccurrence(corpus: Iterable) -> CooccurrenceTable:
    """Count object presence per image (multiplicity is ignored) and
    co-presence per unordered pair. Accepts scene graphs or plain
    per-image object-name collections."""
    objects: Counter[str] = Counter()
    pairs: Counter[tuple[str, str]] = Counter()
    size = 0
    for item in corpus:
        size += 1
        present = sorted(_names_of(item))
        objects.update(present)
        for i, a in enumerate(present):
            for b in present[i + 1:]:
                pairs[(a, b)] += 1
    return CooccurrenceTable(object_counts=dict(objects),
                             pair_counts=dict(pairs), corpus_size=size)


def sample_negative_objects(table: CooccurrenceTable, present: set[str],
                            mode: str, k: int, seed: int) -> list[str]:
    """Pick k objects absent from `present`.

    random: uniform without replacement; popular: top-k by global count;
    adversarial: top-k by summed co-occurrence with the present set.
    Ties break lexicographically.
    """
    if mode not in SAMPLING_MODES:
        raise ConfigError(f"mode must be one of {SAMPLING_MODES}, got {mode!r}")
    absent = sorted(name for name in table.object_counts if name not in present)
    if len(absent) < k:
        raise InsufficientDataError(
            f"need {k} absent candidates, only {len(absent)} available"
        )
    if mode == "random":
        return random.Random(seed).sample(absent, k)
    if mode == "popular":
        ranked = sorted(absent, key=lambda o: (-table.object_counts[o], o))
    else:
        ranked = sorted(
            absent,
            key=lambda o: (-sum(table.pair_count(o, p) for p in present), o),
        )
    return ranked[:k]


# --------------------------------------------------------------------------
# caption perturbation


@dataclass
class NegativeCaption:
    source_image_id: str
    text: str
    strategy: str
    edits: list[str]

    def __post_init__(self):
        if not self.edits:
            raise ConfigError("NegativeCaption must record at least one edit")
        if self.strategy not in INSERT_STRATEGIES + ("remove",):
            raise ConfigError(f"unknown strategy {self.strategy!r}")


@dataclass
class SpannedCaption:
    """A caption whose object mentions carry (start, end, name) spans."""

    image_id: str
    text: str
    spans: list[tuple[int, int, str]]

    def __post_init__(self):
        for start, end, name in self.spans:
            if self.text[start:end] != name:
                raise FormatError(
                    f"span ({start}, {end}) reads "
                    f"{self.text[start:end]!r}, expected {name!r}"
                )


def spanned_caption_from_scene_graph(graph: SceneGraph) -> SpannedCaption:
    """Template caption listing the scene's objects, with recorded spans.

    "A dog." / "A dog and a cat." / "A dog, a cat, and a tree."
    """
    if not graph.objects:
        raise InsufficientDataError(f"scene graph {graph.image_id} has no objects")
    names = [o.name for o in graph.objects]
    parts = [with_article(n) for n in names]
    if len(parts) == 1:
        body = parts[0]
    elif len(parts) == 2:
        body = f"{parts[0]} and {parts[1]}"
    else:
        body = ", ".join(parts[:-1]) + f", and {parts[-1]}"
    text = capitalize_first(body + ".")
    spans = []
    cursor = 0
    for name in names:
        start = text.index(name, cursor)
        spans.append((start, start + len(name), name))
        cursor = start + len(name)
    return SpannedCaption(image_id=graph.image_id, text=text, spans=spans)


def perturb_caption_insert(caption: str, objects: list[str], seed: int,
                           n_insert: int | None = None,
                           strategy: str = "insert_random",
                           source_image_id: str = "") -> NegativeCaption:
    """Insert 1-3 absent objects into a caption.

    `objects` is the candidate pool (usually 3 per sampling category);
    when `n_insert` is None the count is drawn uniformly from 1..3. The
    clause ", along with a X[, a Y[, and a Z]]" lands before the final
    period. Inserting an object already mentioned is an error.
    """
    if not caption.strip():
        raise ConfigError("caption must be nonempty")
    if not objects:
        raise InsufficientDataError("no objects to insert")
    if strategy not in INSERT_STRATEGIES:
        raise ConfigError(f"insert strategy must be one of {INSERT_STRATEGIES}")
    rng = random.Random(seed)
    if n_insert is None:
        n_insert = rng.randint(1, min(3, len(objects)))
    if not 1 <= n_insert <= 3:
        raise ConfigError(f"n_insert must be in [1, 3], got {n_insert}")
    if n_insert > len(objects):
        raise InsufficientDataError(
            f"asked to insert {n_insert} objects from a pool of {len(objects)}"
        )
    picked_idx = sorted(rng.sample(range(len(objects)), n_insert))
    picked = [objects[i] for i in picked_idx]
    for obj in picked:
        if contains_word(caption, obj):
            raise ConfigError(f"object {obj!r} already present in caption")

    phrases = [with_article(o) for o in picked]
    if len(phrases) == 1:
        clause = f", along with {phrases[0]}"
    elif len(phrases) == 2:
        clause = f", along with {phrases[0]}, {phrases[1]}"
    else:
        clause = f", along with {phrases[0]}, {phrases[1]}, and {phrases[2]}"

    stripped = caption.rstrip()
    if stripped.endswith("."):
        text = stripped[:-1] + clause + "."
    else:
        text = stripped + clause + "."
    return NegativeCaption(source_image_id=source_image_id, text=text,
                           strategy=strategy, edits=picked)


_ARTICLE_PREFIX = ("a ", "an ", "the ")


def _expand_span(text: str, start: int, end: int) -> tuple[int, int]:
    prefix = text[:start].lower()
    for art in _ARTICLE_PREFIX:
        if prefix.endswith(art):
            return start - len(art), end
    return start, end


def perturb_caption_remove(caption: SpannedCaption, n_remove: int, seed: int
                           ) -> NegativeCaption:
    """Remove 1-2 annotated object spans plus their article/conjunction.

    Whitespace and punctuation are re-normalized afterwards; removed
    object names are recorded as edits.
    """
    if n_remove not in (1, 2):
        raise ConfigError(f"n_remove must be 1 or 2, got {n_remove}")
    if len(caption.spans) < n_remove:
        raise InsufficientDataError(
            f"caption has {len(caption.spans)} annotated spans, need {n_remove}"
        )
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(caption.spans)), n_remove))
    removed = [caption.spans[i][2] for i in chosen]
    text = caption.text
    for i in reversed(chosen):
        start, end, _ = caption.spans[i]
        start, end = _expand_span(text, start, end)
        text = text[:start] + text[end:]
    text = capitalize_first(normalize_spacing(text))
    return NegativeCaption(source_image_id=caption.image_id, text=text,
                           strategy="remove", edits=removed)


# --------------------------------------------------------------------------
# region instructions


@dataclass
class RegionInstruction:
    image_id: str
    boxes: list[tuple[float, float, float, float]]
    prompt: str
    response: str

    def __post_init__(self):
        if len(self.boxes) != 2:
            raise ConfigError("region instruction needs exactly 2 boxes")


def _object_fragment(obj) -> str:
    attrs = " ".join(obj.attributes)
    return f"the {attrs} {obj.name}" if attrs else f"the {obj.name}"


def gen_region_instruction(graph: SceneGraph, seed: int) -> RegionInstruction:
    """Pick two objects and caption them from their attributes, appending
    any relation that connects the pair."""
    if len(graph.objects) < 2:
        raise InsufficientDataError(
            f"scene graph {graph.image_id} has fewer than 2 objects"
        )
    rng = random.Random(seed)
    idx = sorted(rng.sample(range(len(graph.objects)), 2))
    first, second = graph.objects[idx[0]], graph.objects[idx[1]]
    response = f"{_object_fragment(first)} and {_object_fragment(second)}"
    pair_ids = {first.object_id, second.object_id}
    for rel in graph.relations:
        if {rel.subject_id, rel.object_id} == pair_ids:
            subj = graph.by_id(rel.subject_id)
            obj = graph.by_id(rel.object_id)
            response += f"; the {subj.name} {rel.predicate} the {obj.name}"
            break
    return RegionInstruction(
        image_id=graph.image_id, boxes=[first.bbox, second.bbox],
        prompt=REGION_PROMPT, response=response,
    )


# --------------------------------------------------------------------------
# line-delimited output


def write_negative_captions(path, caps: list[NegativeCaption]) -> None:
    lines = [
        json.dumps({"source_image_id": c.source_image_id, "text": c.text,
                    "strategy": c.strategy, "edits": c.edits}, sort_keys=True)
        for c in caps
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def write_region_instructions(path, items: list[RegionInstruction]) -> None:
    lines = [
        json.dumps({"image_id": r.image_id, "boxes": [list(b) for b in r.boxes],
                    "prompt": r.prompt, "response": r.response}, sort_keys=True)
        for r in items
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")
