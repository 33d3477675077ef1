"""AUPRC metric and the experiment grids (obfuscation, library, refcount).

AUPRC is non-interpolated average precision with ties grouped: sort by
score descending, treat equal scores as one threshold group, and sum
``(R_k - R_{k-1}) * P_k`` over groups. The positive class is "unsafe". The
sum is carried in exact rational arithmetic and converted to float once at
the end, so clean cases (perfect ranking, a single tie group) come out
bit-exact.

Reports share one layout: one row per obfuscation condition ("None" plus
the eight transforms) and an AVERAGE row that is always recomputed as the
arithmetic mean of the nine condition rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .augment import ALL_KINDS, ObfuscationKind, obfuscate
from .classifier import ClassifierSpec, classify
from .errors import InvalidInputError, UndefinedMetricError
from .store import LibrarySnapshot, LibraryStore, SafetyLabel

ROW_ORDER: tuple[str, ...] = ("None",) + tuple(k.value for k in ALL_KINDS) + ("AVERAGE",)
CONDITION_ROWS: tuple[str, ...] = ROW_ORDER[:-1]


@dataclass(frozen=True)
class ScoredExample:
    id: str
    true_label: SafetyLabel
    score: float  # unsafe probability in [0, 1]

    def __post_init__(self):
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"score {self.score!r} is not a finite value in [0, 1]")


@dataclass(frozen=True)
class PRCurve:
    points: tuple[tuple[float, float], ...]  # (recall, precision) per group
    auprc: float


def _tie_groups(examples: Sequence[ScoredExample]):
    ordered = sorted(examples, key=lambda e: -e.score)
    groups: list[tuple[int, int]] = []  # (positives, size) per distinct score
    i = 0
    while i < len(ordered):
        j = i
        pos = 0
        while j < len(ordered) and ordered[j].score == ordered[i].score:
            pos += ordered[j].true_label is SafetyLabel.UNSAFE
            j += 1
        groups.append((pos, j - i))
        i = j
    return groups


def pr_curve(examples: Sequence[ScoredExample]) -> PRCurve:
    total_pos = sum(1 for e in examples if e.true_label is SafetyLabel.UNSAFE)
    if total_pos == 0:
        raise UndefinedMetricError("AUPRC is undefined without positive (unsafe) examples")
    points: list[tuple[float, float]] = []
    ap = Fraction(0)
    tp = pp = 0
    prev_recall = Fraction(0)
    for group_pos, group_size in _tie_groups(examples):
        tp += group_pos
        pp += group_size
        precision = Fraction(tp, pp)
        recall = Fraction(tp, total_pos)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        points.append((float(recall), float(precision)))
    return PRCurve(points=tuple(points), auprc=float(ap))


def auprc(examples: Sequence[ScoredExample]) -> float:
    return pr_curve(examples).auprc


# --- experiment grids --------------------------------------------------------


@dataclass
class EvaluationReport:
    """Per-condition AUPRC rows plus configuration, one classifier+library."""

    rows: dict[str, float]
    config: dict

    @classmethod
    def build(cls, condition_rows: dict[str, float], config: dict) -> "EvaluationReport":
        if set(condition_rows) != set(CONDITION_ROWS):
            missing = set(CONDITION_ROWS) ^ set(condition_rows)
            raise InvalidInputError(f"report rows mismatch: {sorted(missing)}")
        rows = {name: condition_rows[name] for name in CONDITION_ROWS}
        rows["AVERAGE"] = sum(rows.values()) / len(CONDITION_ROWS)
        return cls(rows=rows, config=config)

    @property
    def average(self) -> float:
        return self.rows["AVERAGE"]

    def to_json(self) -> dict:
        return {"rows": self.rows, "config": self.config}


def score_corpus(
    corpus: Sequence,
    spec: ClassifierSpec,
    snapshot: LibrarySnapshot,
    transform: Callable[[str], str] | None = None,
) -> list[ScoredExample]:
    """Classify every corpus example (optionally transformed) into scores."""
    scored = []
    for ex in corpus:
        prompt = transform(ex.prompt) if transform else ex.prompt
        out = classify(prompt, snapshot, spec)
        scored.append(ScoredExample(id=ex.id, true_label=ex.label, score=out.unsafe_probability))
    return scored


def _base_config(corpus, spec: ClassifierSpec, snapshot: LibrarySnapshot, seed: int) -> dict:
    return {
        "classifier": spec.to_json(),
        "library_version": snapshot.version,
        "library_size": {"safe": snapshot.safe_count, "unsafe": snapshot.unsafe_count},
        "reference_count": spec.k_safe + spec.k_unsafe,
        "examples": len(corpus),
        "seed": seed,
    }


def run_obfuscation_grid(
    corpus: Sequence,
    spec: ClassifierSpec,
    snapshot: LibrarySnapshot,
    seed: int = 0,
    library_label: str | None = None,
) -> EvaluationReport:
    """AUPRC per obfuscation condition ("None" plus all eight transforms)."""
    if not corpus:
        raise InvalidInputError("no examples")
    rows: dict[str, float] = {}
    rows["None"] = auprc(score_corpus(corpus, spec, snapshot))
    for kind in ALL_KINDS:
        rows[kind.value] = auprc(
            score_corpus(corpus, spec, snapshot, transform=lambda p: obfuscate(p, kind, seed))
        )
    config = _base_config(corpus, spec, snapshot, seed)
    if library_label is not None:
        config["library_label"] = library_label
    return EvaluationReport.build(rows, config)


def run_library_sweep(
    corpus: Sequence,
    spec: ClassifierSpec,
    snapshots: Sequence[tuple[str, LibrarySnapshot]],
    seed: int = 0,
) -> list[EvaluationReport]:
    """One obfuscation grid per (label, snapshot), in the given order."""
    return [
        run_obfuscation_grid(corpus, spec, snapshot, seed=seed, library_label=label)
        for label, snapshot in snapshots
    ]


def run_refcount_sweep(
    corpus: Sequence,
    spec: ClassifierSpec,
    snapshot: LibrarySnapshot,
    counts: Sequence[int] = (0, 2, 4, 6, 8),
    seed: int = 0,
) -> list[EvaluationReport]:
    """Obfuscation grids with varying total reference count, split evenly
    between safe and unsafe."""
    reports = []
    for count in counts:
        if count % 2:
            raise InvalidInputError(f"reference count must be even, got {count}")
        sub_spec = spec.with_reference_counts(count // 2, count // 2)
        reports.append(run_obfuscation_grid(corpus, sub_spec, snapshot, seed=seed))
    return reports


def flipped_snapshot(snapshot: LibrarySnapshot) -> LibrarySnapshot:
    """The same library with every label toggled and explanations removed."""
    store = LibraryStore.from_snapshot(snapshot)
    store.flip_labels("all", drop_explanations=True)
    return store.publish()


@dataclass
class FlipGroup:
    transitions: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.transitions.values())

    @property
    def flipped(self) -> int:
        return sum(n for (a, b), n in self.transitions.items() if a != b)

    @property
    def flip_ratio(self) -> float:
        return self.flipped / self.total if self.total else 0.0


@dataclass
class FlipReport:
    """Prediction transitions under a label-flipped library, grouped by
    ground-truth label."""

    groups: dict[str, FlipGroup]
    config: dict

    def to_json(self) -> dict:
        return {
            "groups": {
                gt: {
                    "transitions": [
                        {"initial": a, "flipped": b, "count": n}
                        for (a, b), n in sorted(group.transitions.items())
                    ],
                    "total": group.total,
                    "flip_ratio": group.flip_ratio,
                }
                for gt, group in self.groups.items()
            },
            "config": self.config,
        }


def flipped_library_report(
    corpus: Sequence,
    spec: ClassifierSpec,
    snapshot: LibrarySnapshot,
) -> FlipReport:
    if not corpus:
        raise InvalidInputError("no examples")
    flipped = flipped_snapshot(snapshot)
    groups = {label.value: FlipGroup() for label in SafetyLabel}
    for ex in corpus:
        initial = classify(ex.prompt, snapshot, spec).label.value
        after = classify(ex.prompt, flipped, spec).label.value
        key = (initial, after)
        group = groups[ex.label.value]
        group.transitions[key] = group.transitions.get(key, 0) + 1
    config = _base_config(corpus, spec, snapshot, seed=0)
    config["flipped_library_version"] = flipped.version
    return FlipReport(groups=groups, config=config)
