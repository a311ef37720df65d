"""Yes/no benchmark generators.

Three families: object-existence polling (with random / popular /
adversarial negative sampling), attribute/relation questions from scene
graphs, and entity/relation questions from knowledge-graph triples. Every
"no" item records the planted negative fact in its provenance so a
brute-force validator can certify there are no false negatives, and every
family is emitted with an exact 50/50 yes/no balance per question type.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from alignlab.datastore import KGTriple, SceneGraph
from alignlab.datagen import CooccurrenceTable, sample_negative_objects
from alignlab.errors import ConfigError, FormatError, InsufficientDataError
from alignlab.text import derive_seed, indefinite_article

SCHEMA_VERSION = 1
QTYPES = ("object_existence", "attribute", "relation", "kg_entity", "kg_relation")
DEFAULT_FREQUENCY_THRESHOLD = 20
_MAX_CORRUPTION_TRIES = 100


@dataclass
class QAItem:
    id: str
    image_or_entity_id: str
    question: str
    gold: str
    qtype: str
    sampling_mode: str | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.question:
            raise ConfigError("question must be nonempty")
        if self.gold not in ("yes", "no"):
            raise ConfigError(f"gold must be yes/no, got {self.gold!r}")
        if self.qtype not in QTYPES:
            raise ConfigError(f"unknown qtype {self.qtype!r}")
        if self.gold == "no" and "planted" not in self.provenance:
            raise ConfigError("gold=no items must record the planted negative")


def write_qa_items(path, items: list[QAItem]) -> None:
    lines = []
    for it in items:
        lines.append(json.dumps({
            "schema_version": SCHEMA_VERSION,
            "id": it.id, "image_or_entity_id": it.image_or_entity_id,
            "question": it.question, "gold": it.gold, "qtype": it.qtype,
            "sampling_mode": it.sampling_mode, "provenance": it.provenance,
        }, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                          encoding="utf-8")


def read_qa_items(path) -> list[QAItem]:
    items = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            items.append(QAItem(
                id=raw["id"], image_or_entity_id=raw["image_or_entity_id"],
                question=raw["question"], gold=raw["gold"], qtype=raw["qtype"],
                sampling_mode=raw.get("sampling_mode"),
                provenance=raw.get("provenance", {}),
            ))
        except (json.JSONDecodeError, KeyError) as e:
            raise FormatError(f"{path}:{lineno}: bad QA record ({e})") from e
    return items


def _image_objects(item) -> tuple[str, set[str]]:
    if isinstance(item, SceneGraph):
        return item.image_id, item.object_names()
    image_id, names = item
    return image_id, set(names)


def gen_pope(corpus: Iterable, table: CooccurrenceTable, mode: str,
             n_per_image: int, seed: int) -> tuple[list[QAItem], list[dict]]:
    """Object-existence polling questions.

    Per image: up to `n_per_image` present objects asked as gold-yes, and
    the same number of absent objects (sampled in the requested mode)
    asked as gold-no. Images whose absent pool is too small are skipped
    with a warning record so the 50/50 balance is exact.
    """
    items: list[QAItem] = []
    warnings: list[dict] = []
    for item in corpus:
        image_id, present = _image_objects(item)
        pool = sorted(present)
        n_pos = min(n_per_image, len(pool))
        if n_pos == 0:
            warnings.append({"image_id": image_id, "reason": "no objects"})
            continue
        pos_rng = random.Random(derive_seed(seed, "pope", image_id, "pos"))
        chosen = pos_rng.sample(pool, n_pos)
        try:
            planted = sample_negative_objects(
                table, present, mode, n_pos,
                derive_seed(seed, "pope", image_id, "neg"),
            )
        except InsufficientDataError as e:
            warnings.append({"image_id": image_id, "reason": str(e)})
            continue
        for i, (obj, neg) in enumerate(zip(chosen, planted)):
            items.append(QAItem(
                id=f"pope-{mode}-{image_id}-{i}-yes",
                image_or_entity_id=image_id,
                question=f"Is there {indefinite_article(obj)} {obj} in the image?",
                gold="yes", qtype="object_existence", sampling_mode=mode,
                provenance={"object": obj},
            ))
            items.append(QAItem(
                id=f"pope-{mode}-{image_id}-{i}-no",
                image_or_entity_id=image_id,
                question=f"Is there {indefinite_article(neg)} {neg} in the image?",
                gold="no", qtype="object_existence", sampling_mode=mode,
                provenance={"planted": neg},
            ))
    return items, warnings


def gen_vg_qa(graphs: list[SceneGraph],
              frequency_threshold: int = DEFAULT_FREQUENCY_THRESHOLD,
              seed: int = 0) -> list[QAItem]:
    """Attribute and relation questions from scene graphs.

    Attributes/predicates rarer than `frequency_threshold` across the
    corpus are excluded entirely. Each positive is paired with a negative
    that swaps in a different eligible attribute (or predicate) the
    object (or pair) does not have, so both qtypes stay 50/50.
    """
    attr_freq: Counter[str] = Counter()
    pred_freq: Counter[str] = Counter()
    for g in graphs:
        for o in g.objects:
            attr_freq.update(set(o.attributes))
        pred_freq.update(r.predicate for r in g.relations)
    eligible_attrs = sorted(a for a, c in attr_freq.items() if c >= frequency_threshold)
    eligible_preds = sorted(p for p, c in pred_freq.items() if c >= frequency_threshold)

    items: list[QAItem] = []
    for g in graphs:
        for o in g.objects:
            true_attrs = set(o.attributes)
            candidates = [a for a in eligible_attrs if a not in true_attrs]
            for i, attr in enumerate(a for a in o.attributes if a in set(eligible_attrs)):
                if not candidates:
                    continue
                rng = random.Random(derive_seed(seed, "vg-attr", g.image_id,
                                                o.object_id, i))
                planted = rng.choice(candidates)
                items.append(QAItem(
                    id=f"vg-attr-{g.image_id}-{o.object_id}-{i}-yes",
                    image_or_entity_id=g.image_id,
                    question=f"Is the {o.name} {attr} in the image?",
                    gold="yes", qtype="attribute",
                    provenance={"object_id": o.object_id, "attribute": attr},
                ))
                items.append(QAItem(
                    id=f"vg-attr-{g.image_id}-{o.object_id}-{i}-no",
                    image_or_entity_id=g.image_id,
                    question=f"Is the {o.name} {planted} in the image?",
                    gold="no", qtype="attribute",
                    provenance={"object_id": o.object_id, "planted": planted,
                                "true_attributes": sorted(true_attrs)},
                ))
        pair_preds: dict[tuple[str, str], set[str]] = {}
        for r in g.relations:
            pair_preds.setdefault((r.subject_id, r.object_id), set()).add(r.predicate)
        for i, r in enumerate(g.relations):
            if r.predicate not in eligible_preds:
                continue
            held = pair_preds[(r.subject_id, r.object_id)]
            candidates = [p for p in eligible_preds if p not in held]
            if not candidates:
                continue
            rng = random.Random(derive_seed(seed, "vg-rel", g.image_id, i))
            planted = rng.choice(candidates)
            subj = g.by_id(r.subject_id)
            obj = g.by_id(r.object_id)
            items.append(QAItem(
                id=f"vg-rel-{g.image_id}-{i}-yes",
                image_or_entity_id=g.image_id,
                question=f"Is the {subj.name} {r.predicate} the {obj.name}?",
                gold="yes", qtype="relation",
                provenance={"subject_id": r.subject_id, "predicate": r.predicate,
                            "object_id": r.object_id},
            ))
            items.append(QAItem(
                id=f"vg-rel-{g.image_id}-{i}-no",
                image_or_entity_id=g.image_id,
                question=f"Is the {subj.name} {planted} the {obj.name}?",
                gold="no", qtype="relation",
                provenance={"subject_id": r.subject_id, "planted": planted,
                            "object_id": r.object_id,
                            "true_predicates": sorted(held)},
            ))
    return items


def gen_kg_qa(triples: list[KGTriple], entity_map: dict[str, str], seed: int
              ) -> tuple[list[QAItem], list[dict]]:
    """Entity and relation questions from knowledge-graph triples.

    Entity questions poll a head entity's visual handle ("Is this X?");
    relation questions poll the triple itself. Negatives swap in a
    different entity, or corrupt the relation/tail with filtered
    resampling so no corruption collides with a true triple.
    """
    if not triples:
        raise InsufficientDataError("no triples to generate from")
    true_set = {(t.head, t.relation, t.tail) for t in triples}
    entities = sorted({t.head for t in triples} | {t.tail for t in triples})
    relations = sorted({t.relation for t in triples})

    items: list[QAItem] = []
    warnings: list[dict] = []
    for i, t in enumerate(triples):
        handle = entity_map.get(t.head)
        if handle is None:
            warnings.append({"triple_index": i, "head": t.head,
                             "reason": "no visual handle"})
            continue

        depicted = {e for e in entities if entity_map.get(e) == handle}
        entity_pool = [e for e in entities if e not in depicted]
        if not entity_pool:
            warnings.append({"triple_index": i, "head": t.head,
                             "reason": "no distinct entity for a negative"})
            continue
        rng = random.Random(derive_seed(seed, "kg-entity", i))
        planted_entity = rng.choice(entity_pool)
        items.append(QAItem(
            id=f"kg-entity-{i}-yes", image_or_entity_id=handle,
            question=f"Is this {t.head}?", gold="yes", qtype="kg_entity",
            provenance={"entity": t.head},
        ))
        items.append(QAItem(
            id=f"kg-entity-{i}-no", image_or_entity_id=handle,
            question=f"Is this {planted_entity}?", gold="no", qtype="kg_entity",
            provenance={"planted": planted_entity, "true_entity": t.head},
        ))

        corrupted = _corrupt_triple(t, true_set, entities, relations,
                                    derive_seed(seed, "kg-rel", i))
        if corrupted is None:
            items.pop()
            items.pop()
            warnings.append({"triple_index": i, "head": t.head,
                             "reason": "could not corrupt triple"})
            continue
        ch, cr, ct, corrupted_field = corrupted
        items.append(QAItem(
            id=f"kg-rel-{i}-yes", image_or_entity_id=t.head,
            question=f"Is {t.head} {t.relation} {t.tail}?", gold="yes",
            qtype="kg_relation",
            provenance={"head": t.head, "relation": t.relation, "tail": t.tail},
        ))
        items.append(QAItem(
            id=f"kg-rel-{i}-no", image_or_entity_id=t.head,
            question=f"Is {ch} {cr} {ct}?", gold="no", qtype="kg_relation",
            provenance={"head": ch, "relation": cr, "tail": ct,
                        "planted": corrupted_field,
                        "source": [t.head, t.relation, t.tail]},
        ))
    return items, warnings


def _corrupt_triple(t: KGTriple, true_set, entities, relations, seed: int):
    """One-field corruption with filtered resampling against the corpus."""
    rng = random.Random(seed)
    for _ in range(_MAX_CORRUPTION_TRIES):
        if len(relations) > 1 and rng.random() < 0.5:
            cr = rng.choice(relations)
            if cr != t.relation and (t.head, cr, t.tail) not in true_set:
                return t.head, cr, t.tail, "relation"
        else:
            ct = rng.choice(entities)
            if ct != t.tail and (t.head, t.relation, ct) not in true_set:
                return t.head, t.relation, ct, "tail"
    return None
