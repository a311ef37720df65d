"""Answer production and scoring for the yes/no benchmarks.

"yes" is the positive class for F1. Unparseable transcripts are never
dropped: they stay in the accuracy denominator (scored incorrect) and are
reported separately, outside the four confusion cells.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from alignlab.benchgen import QAItem
from alignlab.errors import FormatError
from alignlab.numerics import cosine_similarity
from alignlab.text import indefinite_article

MATCH_TEMPLATE = "There is {article} {object} in the image"


def fill_match_template(obj: str) -> str:
    return MATCH_TEMPLATE.format(article=indefinite_article(obj), object=obj)


def template_match_answer(image_vec, candidate: str, rival: str,
                          embed_text: Callable[[str], np.ndarray]
                          ) -> tuple[str, bool]:
    """Forced-choice text-image matching.

    Fills the template for the candidate and its rival, embeds both, and
    answers "yes" for the candidate iff its template is closer (cosine)
    to the image. Exact ties answer "no" and set the tie flag.
    """
    sim_cand = cosine_similarity(image_vec, embed_text(fill_match_template(candidate)))
    sim_rival = cosine_similarity(image_vec, embed_text(fill_match_template(rival)))
    if sim_cand == sim_rival:
        return "no", True
    return ("yes" if sim_cand > sim_rival else "no"), False


_WORD = re.compile(r"[a-z]+")


def parse_yes_no(transcript: str) -> str:
    """Map a free-form transcript to yes / no / unparseable.

    The leading word decides when it is yes/no; otherwise the first
    standalone yes/no token anywhere does; otherwise unparseable.
    """
    tokens = _WORD.findall(transcript.lower())
    for tok in tokens:
        if tok in ("yes", "no"):
            return tok
    return "unparseable"


@dataclass
class CellCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    n_unparseable: int = 0

    def add(self, gold: str, answer: str) -> None:
        if answer == "unparseable":
            self.n_unparseable += 1
        elif gold == "yes":
            self.tp += answer == "yes"
            self.fn += answer == "no"
        else:
            self.fp += answer == "yes"
            self.tn += answer == "no"

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn + self.n_unparseable

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n if self.n else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "n_unparseable": self.n_unparseable, "n": self.n,
                "accuracy": self.accuracy, "f1": self.f1}


@dataclass
class EvalReport:
    overall: CellCounts
    breakdowns: dict[str, CellCounts] = field(default_factory=dict)

    @property
    def n_items(self) -> int:
        return self.overall.n

    @property
    def accuracy(self) -> float:
        return self.overall.accuracy

    @property
    def f1(self) -> float:
        return self.overall.f1

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "breakdowns": {k: v.to_dict() for k, v in sorted(self.breakdowns.items())},
        }

    def summary_table(self) -> str:
        rows = [("split", "n", "acc", "f1")]
        cells = [("overall", self.overall)]
        cells.extend(sorted(self.breakdowns.items()))
        for name, c in cells:
            rows.append((name, str(c.n), f"{c.accuracy:.4f}", f"{c.f1:.4f}"))
        width = max(len(r[0]) for r in rows)
        return "\n".join(
            f"{r[0]:<{width}}  {r[1]:>6}  {r[2]:>6}  {r[3]:>6}" for r in rows
        )


def score(items: list[QAItem], answers: dict[str, str]) -> EvalReport:
    """Score parsed answers against gold labels, broken down by question
    type and sampling mode. Answers must cover exactly the item ids."""
    item_ids = {it.id for it in items}
    missing = sorted(item_ids - set(answers))
    unknown = sorted(set(answers) - item_ids)
    if missing or unknown:
        raise FormatError(
            f"answer/item id mismatch: missing answers for {missing[:10]}"
            f"{'...' if len(missing) > 10 else ''}; unknown answer ids "
            f"{unknown[:10]}{'...' if len(unknown) > 10 else ''}"
        )
    report = EvalReport(overall=CellCounts())
    for it in items:
        ans = answers[it.id]
        report.overall.add(it.gold, ans)
        report.breakdowns.setdefault(f"qtype:{it.qtype}", CellCounts()).add(it.gold, ans)
        if it.sampling_mode:
            report.breakdowns.setdefault(
                f"mode:{it.sampling_mode}", CellCounts()
            ).add(it.gold, ans)
    return report


def score_transcripts(items: list[QAItem], transcripts: dict[str, str]) -> EvalReport:
    return score(items, {k: parse_yes_no(v) for k, v in transcripts.items()})


def read_answers(path) -> dict[str, str]:
    """Line-delimited {item_id, transcript} records."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            out[raw["item_id"]] = raw["transcript"]
        except (json.JSONDecodeError, KeyError) as e:
            raise FormatError(f"{path}:{lineno}: bad answer record ({e})") from e
    return out


def write_report(path, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
