"""Command-line entry points wiring the modules into batch pipelines.

Every command funnels its randomness through one ``--seed`` flag and the
seed lands in the output manifests, so reruns produce byte-identical
artifacts. Output files are written to temp names and renamed into place.

Exit codes: 0 success, 1 validation error (bad inputs/flags/files),
2 runtime error.
"""

import functools
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import click

from .augment import ALL_KINDS, ObfuscationKind, obfuscate
from .builder import (
    build_external_library,
    build_id_library,
    downsample_library,
    downsample_targets,
    merge_libraries,
    parse_fraction,
)
from .classifier import ClassifierSpec, classify_detailed
from .corpus import load_corpus, save_corpus
from .embedding import EmbedderSpec
from .errors import (
    ConfigurationError,
    DuplicateIdError,
    FormatError,
    InvalidInputError,
    RagmodError,
    UnknownIdError,
)
from .evaluation import (
    flipped_library_report,
    run_library_sweep,
    run_obfuscation_grid,
    run_refcount_sweep,
)
from .prompts import build_training_example, build_eval_prompt, TEMPLATE_VERSION
from .reporting import write_flip_report, write_report_bundle
from .store import load as load_library, save as save_library
from .synthetic import benchmark_data

_VALIDATION_ERRORS = (
    InvalidInputError,
    FormatError,
    ConfigurationError,
    DuplicateIdError,
    UnknownIdError,
    FileNotFoundError,
)


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _VALIDATION_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except (RagmodError, OSError) as exc:
            click.echo(f"runtime error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _write_manifest(out_path: Path, command: str, seed: int, extra: dict | None = None) -> None:
    manifest = {"command": command, "seed": seed}
    if extra:
        manifest.update(extra)
    side = out_path.with_name(out_path.name + ".manifest.json")
    tmp = side.with_name(side.name + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, side)


@click.group()
def main():
    """Retrieval-augmented content moderation toolkit."""


# --- build-library -----------------------------------------------------------


@main.group("build-library")
def build_library():
    """Construct retrieval libraries from labeled corpora."""


@build_library.command("id")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--clusters-per-concept", default=7, show_default=True)
@click.option("--dim", default=256, show_default=True)
@click.option("--seed", default=0, show_default=True)
@cli_errors
def build_id(corpus_path, out_path, clusters_per_concept, dim, seed):
    """Per-concept clustered library from a concept-tagged corpus."""
    corpus = load_corpus(corpus_path)
    snapshot = build_id_library(
        corpus, EmbedderSpec(dim=dim), clusters_per_concept=clusters_per_concept, seed=seed
    )
    save_library(snapshot, out_path)
    _write_manifest(Path(out_path), "build-library id", seed,
                    {"corpus": str(corpus_path), "clusters_per_concept": clusters_per_concept})
    click.echo(f"wrote {out_path}: safe={snapshot.safe_count} unsafe={snapshot.unsafe_count}")


@build_library.command("external")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--k", default=1000, show_default=True)
@click.option("--min-cluster-size", default=2, show_default=True)
@click.option("--dim", default=256, show_default=True)
@click.option("--seed", default=0, show_default=True)
@cli_errors
def build_external(corpus_path, out_path, k, min_cluster_size, dim, seed):
    """Clustered external library; small clusters are discarded."""
    corpus = load_corpus(corpus_path)
    snapshot = build_external_library(
        corpus, EmbedderSpec(dim=dim), k=k, min_cluster_size=min_cluster_size, seed=seed
    )
    save_library(snapshot, out_path)
    _write_manifest(Path(out_path), "build-library external", seed,
                    {"corpus": str(corpus_path), "k": k, "min_cluster_size": min_cluster_size})
    click.echo(f"wrote {out_path}: safe={snapshot.safe_count} unsafe={snapshot.unsafe_count}")


@build_library.command("downsample")
@click.option("--library", "library_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--fraction", "fraction_text", default=None, help="one of 1/8, 1/4, 1/2")
@click.option("--k-safe", type=int, default=None)
@click.option("--k-unsafe", type=int, default=None)
@click.option("--seed", default=0, show_default=True)
@cli_errors
def downsample(library_path, out_path, fraction_text, k_safe, k_unsafe, seed):
    """Re-cluster a library down to a fraction of its size."""
    full = load_library(library_path)
    if fraction_text is not None:
        fraction = parse_fraction(fraction_text)
        targets = downsample_targets(full.safe_count, full.unsafe_count, fraction)
    elif k_safe is not None and k_unsafe is not None:
        targets = (k_safe, k_unsafe)
    else:
        raise InvalidInputError("provide --fraction or both --k-safe and --k-unsafe")
    click.echo(f"k_safe={targets[0]} k_unsafe={targets[1]}")
    snapshot = downsample_library(full, targets=targets, seed=seed)
    save_library(snapshot, out_path)
    _write_manifest(Path(out_path), "build-library downsample", seed,
                    {"library": str(library_path), "k_safe": targets[0], "k_unsafe": targets[1]})
    click.echo(f"wrote {out_path}: safe={snapshot.safe_count} unsafe={snapshot.unsafe_count}")


# --- augment -----------------------------------------------------------------


@main.command("augment")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--kinds", default="all", show_default=True,
              help='"all" or comma-separated transform names')
@click.option("--seed", default=0, show_default=True)
@cli_errors
def augment_cmd(in_path, out_path, kinds, seed):
    """Obfuscate a corpus with the robustness transforms."""
    corpus = load_corpus(in_path)
    if not corpus:
        raise InvalidInputError("no examples")
    if kinds == "all":
        selected = list(ALL_KINDS)
    else:
        try:
            selected = [ObfuscationKind(name.strip()) for name in kinds.split(",")]
        except ValueError as exc:
            raise InvalidInputError(f"unknown obfuscation kind: {exc}") from None
    out_path = Path(out_path)
    tmp = out_path.with_name(out_path.name + ".tmp")
    count = 0
    with open(tmp, "w", encoding="utf-8") as fh:
        for ex in corpus:
            fh.write(json.dumps({"original_id": ex.id, "kind": "none",
                                 "obfuscated_prompt": ex.prompt, "label": ex.label.value},
                                ensure_ascii=False) + "\n")
            count += 1
            for kind in selected:
                fh.write(json.dumps({"original_id": ex.id, "kind": kind.value,
                                     "obfuscated_prompt": obfuscate(ex.prompt, kind, seed),
                                     "label": ex.label.value}, ensure_ascii=False) + "\n")
                count += 1
    os.replace(tmp, out_path)
    _write_manifest(out_path, "augment", seed, {"in": str(in_path), "kinds": kinds})
    click.echo(f"wrote {out_path}: {count} records")


# --- make-dataset ------------------------------------------------------------


@main.command("make-dataset")
@click.argument("mode", type=click.Choice(["train", "eval"]))
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--library", "library_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--k-safe", default=2, show_default=True)
@click.option("--k-unsafe", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@cli_errors
def make_dataset(mode, corpus_path, library_path, out_path, k_safe, k_unsafe, seed):
    """Render enriched prompts (and answer-first targets for `train`).

    Training reasoning text is taken from each example's explanation field.
    """
    corpus = load_corpus(corpus_path)
    if not corpus:
        raise InvalidInputError("no examples")
    snapshot = load_library(library_path)
    spec = ClassifierSpec(k_safe=k_safe, k_unsafe=k_unsafe)
    out_path = Path(out_path)
    tmp = out_path.with_name(out_path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for ex in corpus:
            detail = classify_detailed(ex.prompt, snapshot, spec)
            record = {
                "input_id": ex.id,
                "ref_ids": detail.enriched.ref_ids,
                "library_version": snapshot.version,
                "template_version": TEMPLATE_VERSION,
            }
            if mode == "train":
                enriched, target = build_training_example(
                    ex.prompt,
                    list(detail.safe_results),
                    list(detail.unsafe_results),
                    ex.label,
                    reasoning_text=ex.explanation,
                )
                record["rendered_prompt"] = enriched.rendered
                record["target"] = target.serialize()
            else:
                record["rendered_prompt"] = detail.enriched.rendered
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    os.replace(tmp, out_path)
    _write_manifest(out_path, f"make-dataset {mode}", seed,
                    {"corpus": str(corpus_path), "library": str(library_path)})
    click.echo(f"wrote {out_path}: {len(corpus)} records")


# --- evaluate ----------------------------------------------------------------


def _load_eval_inputs(corpus_path, library_path):
    corpus = load_corpus(corpus_path)
    if not corpus:
        raise InvalidInputError("no examples")
    snapshot = load_library(library_path)
    return corpus, snapshot


@main.group("evaluate")
def evaluate():
    """Run the evaluation grids and write report bundles."""


@evaluate.command("grid")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--library", "library_path", required=True, type=click.Path(exists=True))
@click.option("--outdir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@cli_errors
def evaluate_grid(corpus_path, library_path, outdir, seed):
    """AUPRC per obfuscation condition for one library."""
    corpus, snapshot = _load_eval_inputs(corpus_path, library_path)
    report = run_obfuscation_grid(corpus, ClassifierSpec(), snapshot, seed=seed)
    paths = write_report_bundle([("grid", report)], outdir, stem="grid",
                                title="AUPRC by obfuscation")
    _write_manifest(paths[1], "evaluate grid", seed,
                    {"corpus": str(corpus_path), "library": str(library_path)})
    click.echo(f"AVERAGE={report.average:.4f}")
    for p in paths:
        click.echo(f"wrote {p}")


@evaluate.command("library-sweep")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--id-library", "id_library_path", required=True, type=click.Path(exists=True))
@click.option("--external-library", "ex_library_path", required=True, type=click.Path(exists=True))
@click.option("--outdir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@cli_errors
def evaluate_library_sweep(corpus_path, id_library_path, ex_library_path, outdir, seed):
    """Grids across ID, ID+EX(1/8), ID+EX(1/4), ID+EX(1/2), ID+EX."""
    corpus, id_lib = _load_eval_inputs(corpus_path, id_library_path)
    ex_lib = load_library(ex_library_path)
    ladder = [("ID", id_lib)]
    for denom in (8, 4, 2):
        smaller = downsample_library(ex_lib, fraction=Fraction(1, denom), seed=seed)
        ladder.append((f"ID+EX(1/{denom})", merge_libraries(id_lib, smaller)))
    ladder.append(("ID+EX", merge_libraries(id_lib, ex_lib)))
    reports = run_library_sweep(corpus, ClassifierSpec(), ladder, seed=seed)
    labeled = [(label, rep) for (label, _), rep in zip(ladder, reports)]
    sizes = [len(snap) for _, snap in ladder]
    paths = write_report_bundle(labeled, outdir, stem="library_sweep",
                                x_values=sizes, x_label="library size (entries)",
                                title="AUPRC vs retrieval library size")
    _write_manifest(paths[1], "evaluate library-sweep", seed,
                    {"corpus": str(corpus_path), "id_library": str(id_library_path),
                     "external_library": str(ex_library_path)})
    for (label, _), rep in zip(ladder, reports):
        click.echo(f"{label}: AVERAGE={rep.average:.4f}")
    for p in paths:
        click.echo(f"wrote {p}")


@evaluate.command("refcount-sweep")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--library", "library_path", required=True, type=click.Path(exists=True))
@click.option("--counts", default="0,2,4,6,8", show_default=True)
@click.option("--outdir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@cli_errors
def evaluate_refcount_sweep(corpus_path, library_path, counts, outdir, seed):
    """Grids with varying total reference counts (even, split 50/50)."""
    corpus, snapshot = _load_eval_inputs(corpus_path, library_path)
    count_list = [int(c) for c in counts.split(",")]
    reports = run_refcount_sweep(corpus, ClassifierSpec(), snapshot, counts=count_list, seed=seed)
    labeled = [(f"{c} ref.", rep) for c, rep in zip(count_list, reports)]
    paths = write_report_bundle(labeled, outdir, stem="refcount_sweep",
                                x_values=count_list, x_label="reference examples",
                                title="AUPRC vs reference count")
    _write_manifest(paths[1], "evaluate refcount-sweep", seed,
                    {"corpus": str(corpus_path), "library": str(library_path), "counts": counts})
    for c, rep in zip(count_list, reports):
        click.echo(f"{c} refs: AVERAGE={rep.average:.4f}")
    for p in paths:
        click.echo(f"wrote {p}")


@evaluate.command("flip-report")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--library", "library_path", required=True, type=click.Path(exists=True))
@click.option("--outdir", required=True, type=click.Path())
@cli_errors
def evaluate_flip_report(corpus_path, library_path, outdir):
    """Prediction transitions under a fully label-flipped library."""
    corpus, snapshot = _load_eval_inputs(corpus_path, library_path)
    report = flipped_library_report(corpus, ClassifierSpec(), snapshot)
    paths = write_flip_report(report, outdir)
    for gt, group in report.groups.items():
        click.echo(f"{gt}: flip_ratio={group.flip_ratio * 100:.2f}%")
    for p in paths:
        click.echo(f"wrote {p}")


# --- synth -------------------------------------------------------------------


@main.command("synth")
@click.option("--outdir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@cli_errors
def synth(outdir, seed):
    """Write the bundled synthetic corpora (home domain + shifted splits)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    data = benchmark_data(seed=seed)
    for name, examples in (
        ("home_corpus", data.home),
        ("shift_validation", data.shift_validation),
        ("shift_test", data.shift_test),
    ):
        path = outdir / f"{name}.jsonl"
        save_corpus(examples, path)
        _write_manifest(path, "synth", seed, {"split": name, "examples": len(examples)})
        click.echo(f"wrote {path}: {len(examples)} examples")


# --- serve -------------------------------------------------------------------


@main.command("serve")
@click.option("--library", "library_path", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8700, show_default=True)
@click.option("--dim", default=256, show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--auto-publish/--no-auto-publish", default=True, show_default=True)
@click.option("--token-env", default="RAGMOD_TOKEN", show_default=True,
              help="environment variable holding the mutation bearer token")
@cli_errors
def serve(library_path, host, port, dim, threshold, auto_publish, token_env):
    """Start the classification + curation HTTP service."""
    import uvicorn

    from .service import ServiceConfig, build_service

    config = ServiceConfig(
        library_path=Path(library_path),
        embedder=EmbedderSpec(dim=dim),
        classifier=ClassifierSpec(threshold=threshold),
        auto_publish=auto_publish,
        token=os.environ.get(token_env),
        host=host,
        port=port,
    )
    _, app = build_service(config)
    click.echo(f"serving on http://{host}:{port} (library: {library_path})")
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
