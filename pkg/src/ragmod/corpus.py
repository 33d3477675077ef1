"""Corpus records and JSONL I/O.

A corpus line is ``{id, prompt, label, concept?, explanation?}``. Embeddings
are not stored inline; they are either computed on demand from the manifest
embedder or attached from a binary sidecar.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embedding import EmbedderSpec, embed, load_precomputed
from .errors import FormatError
from .store import SafetyLabel


@dataclass
class CorpusExample:
    id: str
    prompt: str
    label: SafetyLabel
    concept: str | None = None
    explanation: str = ""
    embedding: np.ndarray | None = None  # attached from a sidecar when present

    def vector(self, spec: EmbedderSpec) -> np.ndarray:
        if self.embedding is not None:
            return self.embedding
        return embed(self.prompt, spec)

    def to_json(self) -> dict:
        obj = {"id": self.id, "prompt": self.prompt, "label": self.label.value}
        if self.concept is not None:
            obj["concept"] = self.concept
        if self.explanation:
            obj["explanation"] = self.explanation
        return obj


def load_corpus(path: str | Path, sidecar: str | Path | None = None) -> list[CorpusExample]:
    path = Path(path)
    examples: list[CorpusExample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("id", "prompt", "label"):
                if key not in obj:
                    raise FormatError(f"{path}:{lineno}: missing required field {key!r}")
            examples.append(
                CorpusExample(
                    id=str(obj["id"]),
                    prompt=obj["prompt"],
                    label=SafetyLabel.parse(obj["label"]),
                    concept=obj.get("concept"),
                    explanation=obj.get("explanation", "") or "",
                )
            )
    if sidecar is not None:
        vectors = load_precomputed(sidecar, ids=[e.id for e in examples])
        for e in examples:
            if e.id in vectors:
                e.embedding = vectors[e.id]
    return examples


def save_corpus(examples: Iterable[CorpusExample], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for e in examples:
            fh.write(json.dumps(e.to_json(), ensure_ascii=False) + "\n")
    os.replace(tmp, path)
