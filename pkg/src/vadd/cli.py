"""Command-line front end.

Each subcommand is a thin wrapper over one workflow call. Machine output
goes to stdout, diagnostics and progress to stderr. Exit codes: 0 ok,
2 validation/config problem, 3 I/O problem, 4 internal error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import workflows
from .errors import (
    ContractError,
    FormatError,
    ParseError,
    ProtocolError,
    TrainingDiverged,
    ValidationError,
    VaddError,
)
from .inference import load_verdicts, write_verdicts
from .metrics import render_report, score_classification, score_detection
from .protocol import (
    TEN_CLASS,
    THREE_CLASS,
    load_manifest,
    load_swap_plan,
    validate_swap_plan,
)
from .store import SourceSpec, open_store
from .synth import DEFAULT_SOURCES, SynthConfig, generate, write_dataset
from .training import TrainConfig, load_checkpoint, save_checkpoint

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_INTERNAL = 4

_CONFIG_ERRORS = (
    ContractError,
    ValidationError,
    ParseError,
    ProtocolError,
    FormatError,
)


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _CONFIG_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except (TrainingDiverged, VaddError) as exc:
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)

    return wrapper


@click.group()
@click.option("--quiet", is_flag=True, help="Suppress progress output on stderr.")
@click.option("--json", "json_mode", is_flag=True, help="Machine-readable stdout.")
@click.option("--seed", type=int, default=None, help="Default seed for subcommands.")
@click.pass_context
def main(ctx, quiet, json_mode, seed):
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet
    ctx.obj["json"] = json_mode
    ctx.obj["seed"] = seed


def _status(ctx, message: str) -> None:
    if not ctx.obj.get("quiet"):
        click.echo(message, err=True)


def _effective_seed(ctx, seed: int | None) -> int:
    if seed is not None:
        return seed
    if ctx.obj.get("seed") is not None:
        return ctx.obj["seed"]
    return 0


@main.command("plan")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option(
    "--split",
    type=click.Choice(["test", "train", "all"]),
    default="test",
    show_default=True,
    help="Manifest subset the plan covers.",
)
@click.pass_context
@handles_errors
def cmd_plan(ctx, manifest_path, seed, out_path, split):
    """Generate an audio-swap plan from a manifest."""
    manifest = load_manifest(manifest_path)
    result = workflows.build_plan(manifest, _effective_seed(ctx, seed), split)
    subset = manifest if split == "all" else manifest.subset(split)
    report = validate_swap_plan(result.plan, subset)
    if not report.valid:
        raise VaddError(f"generated plan failed validation: {report.violations}")
    result.plan.save(out_path)

    total = sum(s.total for s in result.summary)
    total_unmod = sum(s.unmodified for s in result.summary)
    total_manip = sum(s.manipulated for s in result.summary)
    if ctx.obj["json"]:
        click.echo(
            json.dumps(
                {
                    "plan": str(out_path),
                    "per_class": [
                        {
                            "class": s.scene,
                            "total": s.total,
                            "unmodified": s.unmodified,
                            "manipulated": s.manipulated,
                        }
                        for s in result.summary
                    ],
                    "total": {
                        "total": total,
                        "unmodified": total_unmod,
                        "manipulated": total_manip,
                    },
                }
            )
        )
    else:
        click.echo(f"{'class':<20}{'total':>8}{'unmodified':>12}{'manipulated':>13}")
        for s in result.summary:
            click.echo(f"{s.scene:<20}{s.total:>8}{s.unmodified:>12}{s.manipulated:>13}")
        click.echo(f"{'total':<20}{total:>8}{total_unmod:>12}{total_manip:>13}")
    _status(ctx, f"plan written to {out_path}")


@main.command("validate")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--plan", "plan_path", type=click.Path(), default=None)
@click.option("--store", "store_path", type=click.Path(), default=None)
@click.option(
    "--split",
    type=click.Choice(["test", "train", "all"]),
    default="test",
    show_default=True,
)
@click.pass_context
@handles_errors
def cmd_validate(ctx, manifest_path, plan_path, store_path, split):
    """Validate a swap plan against a manifest, or an embedding store."""
    if store_path is not None:
        store = open_store(store_path)
        payload = {
            "valid": True,
            "videos": len(store),
            "sources": [s.to_dict() for s in store.sources],
            "segments_per_video": store.segments_per_video,
        }
        click.echo(json.dumps(payload) if ctx.obj["json"] else
                   f"store ok: {len(store)} records, width {store.width}")
        return
    if manifest_path is None or plan_path is None:
        raise ContractError("provide --store, or both --manifest and --plan")
    manifest = load_manifest(manifest_path)
    subset = manifest if split == "all" else manifest.subset(split)
    plan = load_swap_plan(plan_path)
    report = validate_swap_plan(plan, subset)
    if ctx.obj["json"]:
        click.echo(json.dumps(report.to_dict()))
    else:
        if report.valid:
            click.echo("plan is valid")
        for v in report.violations:
            click.echo(f"{v.kind}: {v.message}")
    if not report.valid:
        sys.exit(EXIT_VALIDATION)


def _parse_sources(text: str) -> tuple[SourceSpec, ...]:
    if text == "default":
        return DEFAULT_SOURCES
    specs = []
    for part in text.split(","):
        fields = part.strip().split(":")
        if len(fields) != 3:
            raise ContractError(
                f"bad source spec {part!r}; expected name:modality:dim"
            )
        specs.append(SourceSpec(fields[0], fields[1], int(fields[2])))
    return tuple(specs)


@main.command("synth")
@click.option("--classes", "num_classes", type=int, default=3, show_default=True)
@click.option("--videos-per-class", type=int, default=20, show_default=True)
@click.option("--noise-sigma", type=float, default=0.1, show_default=True)
@click.option("--jitter-sigma", type=float, default=0.05, show_default=True)
@click.option("--segments", type=int, default=10, show_default=True)
@click.option("--train-fraction", type=float, default=0.8, show_default=True)
@click.option("--augment-train", is_flag=True)
@click.option("--sources", default="default", show_default=True,
              help="Comma-separated name:modality:dim triples, or 'default'.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
@handles_errors
def cmd_synth(ctx, num_classes, videos_per_class, noise_sigma, jitter_sigma,
              segments, train_fraction, augment_train, sources, seed, out_dir):
    """Generate a synthetic manifest + embedding store."""
    config = SynthConfig(
        num_classes=num_classes,
        videos_per_class=videos_per_class,
        sources=_parse_sources(sources),
        noise_sigma=noise_sigma,
        segment_jitter_sigma=jitter_sigma,
        seed=_effective_seed(ctx, seed),
        segments_per_video=segments,
        train_fraction=train_fraction,
        augment_train=augment_train,
    )
    dataset = generate(config)
    write_dataset(dataset, out_dir)
    payload = {
        "out": str(out_dir),
        "videos": len(dataset.manifest),
        "records": len(dataset.store),
        "classes": dataset.prototypes.classes,
        "width": dataset.store.width,
    }
    click.echo(json.dumps(payload) if ctx.obj["json"] else
               f"wrote {payload['records']} records "
               f"({payload['videos']} videos, width {payload['width']}) to {out_dir}")


def _apply_options(fn, options):
    for option in reversed(options):
        fn = option(fn)
    return fn


def _shared_options(fn):
    return _apply_options(fn, [
        click.option("--modality", type=click.Choice(workflows.MODALITY_CHOICES),
                     default="av", show_default=True),
        click.option("--taxonomy", type=click.Choice([TEN_CLASS, THREE_CLASS]),
                     default=TEN_CLASS, show_default=True),
        click.option("--d-model", type=int, default=256, show_default=True),
        click.option("--num-heads", type=int, default=4, show_default=True),
        click.option("--fc-hidden", type=int, default=512, show_default=True),
        click.option("--dropout", type=float, default=0.3, show_default=True),
        click.option("--es-chunk-tokens", type=int, default=4, show_default=True),
        click.option("--init-seed", type=int, default=0, show_default=True),
        click.option("--batch-size", type=int, default=32, show_default=True),
        click.option("--epochs", type=int, default=20, show_default=True),
        click.option("--lr-start", type=float, default=0.001, show_default=True),
        click.option("--lr-end", type=float, default=0.00001, show_default=True),
        click.option("--lr-end-epoch", type=int, default=19, show_default=True),
        click.option("--momentum", type=float, default=0.0, show_default=True),
        click.option("--shuffle-seed", type=int, default=0, show_default=True),
    ])


def _train_options(fn):
    return _apply_options(_shared_options(fn), [
        click.option("--attention", default="ls", show_default=True,
                     help="ns, es, ms, ls or a +-combination."),
        click.option("--no-augmented", is_flag=True,
                     help="Exclude augmented records from training."),
        click.option("--single-fc", is_flag=True),
    ])


@main.command("train")
@click.option("--store", "store_path", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@_train_options
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--log", "log_path", type=click.Path(), default=None)
@click.pass_context
@handles_errors
def cmd_train(ctx, store_path, manifest_path, modality, attention, taxonomy,
              no_augmented, single_fc, d_model, num_heads, fc_hidden, dropout,
              es_chunk_tokens, init_seed, batch_size, epochs, lr_start, lr_end,
              lr_end_epoch, momentum, shuffle_seed, out_path, log_path):
    """Train a scene classifier and write a checkpoint."""
    store = open_store(store_path)
    manifest = load_manifest(manifest_path)
    train_cfg = TrainConfig(
        batch_size=batch_size,
        epochs=epochs,
        lr_start=lr_start,
        lr_end=lr_end,
        lr_end_epoch=lr_end_epoch,
        momentum=momentum,
        shuffle_seed=shuffle_seed,
    )
    result = workflows.train_classifier(
        store,
        manifest,
        modality=modality,
        attention=attention,
        taxonomy=taxonomy,
        use_augmented=not no_augmented,
        double_fc=not single_fc,
        d_model=d_model,
        num_heads=num_heads,
        fc_hidden=fc_hidden,
        dropout_rate=dropout,
        es_chunk_tokens=es_chunk_tokens,
        init_seed=init_seed,
        train_cfg=train_cfg,
        progress=None if ctx.obj["quiet"] else (
            lambda s: click.echo(
                f"epoch {s.epoch:>3}  lr {s.lr:.6f}  loss {s.mean_loss:.4f}  "
                f"acc {s.accuracy:.4f}",
                err=True,
            )
        ),
    )
    save_checkpoint(out_path, result.model, train_cfg, train_cfg.epochs, result.labels)
    if log_path:
        Path(log_path).write_text(result.log.to_csv(), encoding="utf-8")
    payload = {
        "checkpoint": str(out_path),
        "labels": result.labels,
        "train_accuracy": result.train_accuracy,
        "test_accuracy": result.test_accuracy,
        "final_loss": result.log.epochs[-1].mean_loss,
    }
    test_note = (
        "no test split" if result.test_accuracy is None
        else f"test acc {result.test_accuracy:.4f}"
    )
    click.echo(json.dumps(payload) if ctx.obj["json"] else
               f"checkpoint {out_path}: train acc {result.train_accuracy:.4f}, "
               f"{test_note}")


@main.command("detect")
@click.option("--store", "store_path", required=True, type=click.Path())
@click.option("--plan", "plan_path", required=True, type=click.Path())
@click.option("--vsc", "vsc_path", required=True, type=click.Path())
@click.option("--asc", "asc_path", required=True, type=click.Path())
@click.option("--taxonomy", "comparison",
              type=click.Choice(["native", THREE_CLASS]), default="native",
              show_default=True,
              help="Compare votes as trained, or coarsened to 3 classes.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
@handles_errors
def cmd_detect(ctx, store_path, plan_path, vsc_path, asc_path, comparison,
               out_path):
    """Flag plan items whose visual and audio classifications disagree."""
    store = open_store(store_path)
    plan = load_swap_plan(plan_path)
    vsc = load_checkpoint(vsc_path)
    asc = load_checkpoint(asc_path)
    result = workflows.run_detection(vsc, asc, store, plan, comparison=comparison)
    write_verdicts(result.run.verdicts, out_path)
    payload = {
        "verdicts": str(out_path),
        "items": len(result.run.verdicts),
        "skipped": result.run.skipped,
        "f1": result.report.detection_f1,
        "precision": result.report.detection_precision,
        "recall": result.report.detection_recall,
    }
    if ctx.obj["json"]:
        click.echo(json.dumps(payload))
    else:
        click.echo(
            f"{payload['items']} verdicts -> {out_path} "
            f"(F1 {payload['f1']:.4f}, skipped {len(result.run.skipped)})"
        )


@main.command("eval")
@click.option("--verdicts", "verdicts_path", type=click.Path(), default=None)
@click.option("--pairs", "pairs_path", type=click.Path(), default=None,
              help="JSONL of {\"true\": label, \"pred\": label} objects.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["text", "json", "csv"]),
              default=None, help="Stdout format (default text, or json with --json).")
@click.pass_context
@handles_errors
def cmd_eval(ctx, verdicts_path, pairs_path, out_path, fmt):
    """Score a verdicts file or a classification pairs file."""
    if (verdicts_path is None) == (pairs_path is None):
        raise ContractError("provide exactly one of --verdicts or --pairs")
    if verdicts_path is not None:
        verdicts = load_verdicts(verdicts_path)
        report = score_detection(verdicts)
        out_fmt = fmt or ("json" if ctx.obj["json"] else "text")
        click.echo(render_report(report, out_fmt), nl=False)
        if out_path:
            Path(out_path).write_text(render_report(report, "json"), encoding="utf-8")
    else:
        pairs = []
        with open(pairs_path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    obj = json.loads(line)
                    pairs.append((obj["true"], obj["pred"]))
        accuracy, cm = score_classification(pairs)
        payload = {"accuracy": accuracy, "confusion": cm.to_dict()}
        if fmt == "csv":
            click.echo(cm.to_csv(), nl=False)
        elif ctx.obj["json"] or fmt == "json":
            click.echo(json.dumps(payload))
        else:
            click.echo(f"accuracy: {accuracy:.4f}")
            click.echo(cm.to_csv(), nl=False)
        if out_path:
            Path(out_path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


@main.command("ablate")
@click.option("--store", "store_path", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--grid", type=click.Choice(sorted(workflows.ABLATION_GRIDS)),
              default="full", show_default=True,
              help="full: 8 attention variants + no-DA + single-FC.")
@_shared_options
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
@handles_errors
def cmd_ablate(ctx, store_path, manifest_path, grid, modality, taxonomy,
               d_model, num_heads, fc_hidden, dropout, es_chunk_tokens,
               init_seed, batch_size, epochs, lr_start, lr_end,
               lr_end_epoch, momentum, shuffle_seed, out_path):
    """Train the design grid and emit one comparison row per variant."""
    store = open_store(store_path)
    manifest = load_manifest(manifest_path)
    train_cfg = TrainConfig(
        batch_size=batch_size,
        epochs=epochs,
        lr_start=lr_start,
        lr_end=lr_end,
        lr_end_epoch=lr_end_epoch,
        momentum=momentum,
        shuffle_seed=shuffle_seed,
    )
    rows = workflows.run_ablation(
        store,
        manifest,
        modality=modality,
        taxonomy=taxonomy,
        grid=grid,
        d_model=d_model,
        num_heads=num_heads,
        fc_hidden=fc_hidden,
        dropout_rate=dropout,
        es_chunk_tokens=es_chunk_tokens,
        init_seed=init_seed,
        train_cfg=train_cfg,
        progress=None if ctx.obj["quiet"] else (
            lambda r: click.echo(
                f"{r.label:<16} test acc {r.test_accuracy:.4f} "
                f"loss {r.epoch1_loss:.4f} -> {r.final_loss:.4f}",
                err=True,
            )
        ),
    )
    csv_text = workflows.ablation_csv(rows)
    click.echo(csv_text, nl=False)
    if out_path:
        Path(out_path).write_text(csv_text, encoding="utf-8")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@handles_errors
def cmd_serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
