"""Small text helpers shared by the generators and the eval harness."""

from __future__ import annotations

import hashlib
import re

_VOWELS = "aeiou"


def indefinite_article(word: str) -> str:
    """Vowel rule only: 'an apple', 'a dog' (no phonetic exceptions)."""
    return "an" if word and word[0].lower() in _VOWELS else "a"


def with_article(word: str) -> str:
    return f"{indefinite_article(word)} {word}"


def normalize_spacing(text: str) -> str:
    """Collapse whitespace runs and fix punctuation spacing artifacts."""
    prev = None
    while prev != text:
        prev = text
        text = re.sub(r"\s+", " ", text)
        text = re.sub(r"\s+([.,])", r"\1", text)
        text = re.sub(r",\s*,", ",", text)
        text = re.sub(r",\s*\.", ".", text)
        text = re.sub(r"\band\s+and\b", "and", text)
        text = re.sub(r"\band\s*([.,])", r"\1", text)
        text = re.sub(r"^[\s,]+", "", text)
        text = re.sub(r"^and\b\s*", "", text)
    return text.strip()


def capitalize_first(text: str) -> str:
    for i, ch in enumerate(text):
        if ch.isalpha():
            return text[:i] + ch.upper() + text[i + 1:]
    return text


def contains_word(text: str, word: str) -> bool:
    return re.search(rf"\b{re.escape(word)}\b", text, re.IGNORECASE) is not None


def derive_seed(master_seed: int, *parts) -> int:
    """Stable per-item sub-seed: hash of the master seed and item tags."""
    key = ":".join([str(master_seed), *map(str, parts)]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")
