"""Text obfuscation transforms for robustness test sets.

Eight deterministic, seeded transforms. Reference behaviour on
"Hello world":

    change_case               HELLO WORLD
    insert_punctuation_chars  He'll'o w'or'ld'
    insert_text               PK Hello world
    insert_whitespace_chars   Hell o wo rld
    merge_words               Helloworld
    replace_similar_chars     Hell[] world      (with a seed picking that 'o')
    simulate_typos            Hello worls       (adjacent-key d->s)
    split_words               Hello wor ld

All transforms work on grapheme units (a base character plus its combining
marks) so multi-codepoint characters are never split. Labels are never
touched; the transforms only rewrite prompt text.
"""

from __future__ import annotations

import enum
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .embedding import fnv1a64
from .rng import SplitMix64, mix


class ObfuscationKind(enum.Enum):
    CHANGE_CASE = "change_case"
    INSERT_PUNCTUATION_CHARS = "insert_punctuation_chars"
    INSERT_TEXT = "insert_text"
    INSERT_WHITESPACE_CHARS = "insert_whitespace_chars"
    MERGE_WORDS = "merge_words"
    REPLACE_SIMILAR_CHARS = "replace_similar_chars"
    SIMULATE_TYPOS = "simulate_typos"
    SPLIT_WORDS = "split_words"

    def __str__(self) -> str:
        return self.value


ALL_KINDS: tuple[ObfuscationKind, ...] = tuple(ObfuscationKind)

PUNCTUATION_SET = "'.,!?;:"
INSERT_TOKENS = ("PK", "QV", "ZR", "XJ", "WQ", "KZ", "JX", "VQZ", "XKP", "ZQW")
PUNCTUATION_STRIDE = 2  # one mark after every 2 non-space characters
WHITESPACE_STRIDE = 5  # roughly one extra space per 5 non-space characters
REPLACE_PROBABILITY = 0.3
TYPO_PROBABILITY = 0.3

SIMILAR_CHARS: Mapping[str, tuple[str, ...]] = {
    "a": ("@",),
    "o": ("[]", "0"),
    "l": ("1",),
    "e": ("3",),
    "s": ("$",),
    "i": ("!",),
}

_QWERTY_ROWS = ("qwertyuiop", "asdfghjkl", "zxcvbnm")


def _build_qwerty_neighbors() -> dict[str, str]:
    pos = {}
    for r, row in enumerate(_QWERTY_ROWS):
        for c, ch in enumerate(row):
            pos[ch] = (r, c)
    out = {}
    for ch, (r, c) in pos.items():
        neigh = []
        for rr in (r - 1, r, r + 1):
            if not 0 <= rr < len(_QWERTY_ROWS):
                continue
            for cc in (c - 1, c, c + 1):
                if (rr, cc) == (r, c):
                    continue
                if 0 <= cc < len(_QWERTY_ROWS[rr]):
                    neigh.append(_QWERTY_ROWS[rr][cc])
        out[ch] = "".join(neigh)
    return out


QWERTY_NEIGHBORS = _build_qwerty_neighbors()


def _graphemes(text: str) -> list[str]:
    """Split into base characters grouped with their combining marks."""
    out: list[str] = []
    for ch in text:
        if out and unicodedata.category(ch) in ("Mn", "Mc", "Me"):
            out[-1] += ch
        else:
            out.append(ch)
    return out


def _is_space(g: str) -> bool:
    return g[:1].isspace()


def _rng_for(text: str, kind: ObfuscationKind, seed: int) -> SplitMix64:
    # decorrelate streams across texts and kinds while staying a pure
    # function of (text, kind, seed)
    kind_index = ALL_KINDS.index(kind)
    return SplitMix64(mix(seed, fnv1a64(text.encode("utf-8")), kind_index))


def _change_case(text: str, rng: SplitMix64) -> str:
    return text.upper()


def _merge_words(text: str, rng: SplitMix64) -> str:
    return "".join(g for g in _graphemes(text) if not _is_space(g))


def _insert_punctuation(text: str, rng: SplitMix64) -> str:
    mark = PUNCTUATION_SET[rng.below(len(PUNCTUATION_SET))]
    out: list[str] = []
    count = 0
    for g in _graphemes(text):
        out.append(g)
        if not _is_space(g):
            count += 1
            if count % PUNCTUATION_STRIDE == 0:
                out.append(mark)
    return "".join(out)


def _insert_text(text: str, rng: SplitMix64) -> str:
    return rng.choice(INSERT_TOKENS) + " " + text


def _insert_whitespace(text: str, rng: SplitMix64) -> str:
    graphemes = _graphemes(text)
    if len(graphemes) < 2:
        return text
    non_space = sum(1 for g in graphemes if not _is_space(g))
    n_insert = max(1, non_space // WHITESPACE_STRIDE)
    n_insert = min(n_insert, len(graphemes) - 1)
    positions = sorted(rng.sample_indices(len(graphemes) - 1, n_insert))
    out: list[str] = []
    cuts = {p + 1 for p in positions}  # insert after grapheme index p
    for i, g in enumerate(graphemes):
        out.append(g)
        if i + 1 in cuts:
            out.append(" ")
    return "".join(out)


def _split_words(text: str, rng: SplitMix64) -> str:
    words = text.split(" ")
    eligible = [i for i, w in enumerate(words) if len(_graphemes(w)) >= 2]
    if not eligible:
        return text
    wi = eligible[rng.below(len(eligible))]
    graphemes = _graphemes(words[wi])
    cut = 1 + rng.below(len(graphemes) - 1)
    words[wi] = "".join(graphemes[:cut]) + " " + "".join(graphemes[cut:])
    return " ".join(words)


def _replace_similar(text: str, rng: SplitMix64) -> str:
    out: list[str] = []
    for g in _graphemes(text):
        candidates = SIMILAR_CHARS.get(g)
        if candidates and rng.next_float() < REPLACE_PROBABILITY:
            out.append(candidates[rng.below(len(candidates))] if len(candidates) > 1 else candidates[0])
        else:
            out.append(g)
    return "".join(out)


def _typo_word(word: str, rng: SplitMix64) -> str:
    graphemes = _graphemes(word)
    n = len(graphemes)
    op = rng.below(4)  # 0 substitute, 1 swap, 2 delete, 3 duplicate
    if op == 0:
        eligible = [i for i, g in enumerate(graphemes) if g.lower() in QWERTY_NEIGHBORS]
        if eligible:
            i = eligible[rng.below(len(eligible))]
            neighbors = QWERTY_NEIGHBORS[graphemes[i].lower()]
            graphemes[i] = neighbors[rng.below(len(neighbors))]
            return "".join(graphemes)
        op = 3
    if op == 1 and n >= 2:
        i = rng.below(n - 1)
        graphemes[i], graphemes[i + 1] = graphemes[i + 1], graphemes[i]
        return "".join(graphemes)
    if op == 2 and n >= 2:
        del graphemes[rng.below(n)]
        return "".join(graphemes)
    # duplication; also the fallback when swap/delete need length >= 2
    i = rng.below(n)
    graphemes.insert(i, graphemes[i])
    return "".join(graphemes)


def _simulate_typos(text: str, rng: SplitMix64) -> str:
    words = text.split(" ")
    return " ".join(
        _typo_word(w, rng) if w and rng.next_float() < TYPO_PROBABILITY else w
        for w in words
    )


_TRANSFORMS = {
    ObfuscationKind.CHANGE_CASE: _change_case,
    ObfuscationKind.INSERT_PUNCTUATION_CHARS: _insert_punctuation,
    ObfuscationKind.INSERT_TEXT: _insert_text,
    ObfuscationKind.INSERT_WHITESPACE_CHARS: _insert_whitespace,
    ObfuscationKind.MERGE_WORDS: _merge_words,
    ObfuscationKind.REPLACE_SIMILAR_CHARS: _replace_similar,
    ObfuscationKind.SIMULATE_TYPOS: _simulate_typos,
    ObfuscationKind.SPLIT_WORDS: _split_words,
}


def obfuscate(text: str, kind: ObfuscationKind, seed: int = 0) -> str:
    """Apply one transform. Pure function of (text, kind, seed)."""
    if not text:
        return text
    return _TRANSFORMS[kind](text, _rng_for(text, kind, seed))


@dataclass(frozen=True)
class AugmentedExample:
    original_id: str
    original: str
    obfuscated: str
    kind: ObfuscationKind | None  # None marks the untouched original
    seed: int
    label: object = None

    @property
    def kind_name(self) -> str:
        return self.kind.value if self.kind else "none"


def augment_test_set(
    examples: Sequence,
    kinds: Iterable[ObfuscationKind] = ALL_KINDS,
    seed: int = 0,
    keep_originals: bool = True,
) -> dict[str, list[AugmentedExample]]:
    """Obfuscate a labeled corpus with every kind; labels pass through.

    ``examples`` need ``id``, ``prompt`` and ``label`` attributes. Returns
    kind-name -> examples, with the originals under ``"none"`` when kept.
    """
    kinds = tuple(kinds)
    out: dict[str, list[AugmentedExample]] = {}
    if keep_originals:
        out["none"] = [
            AugmentedExample(ex.id, ex.prompt, ex.prompt, None, seed, label=ex.label)
            for ex in examples
        ]
    for kind in kinds:
        out[kind.value] = [
            AugmentedExample(
                ex.id, ex.prompt, obfuscate(ex.prompt, kind, seed), kind, seed, label=ex.label
            )
            for ex in examples
        ]
    return out
