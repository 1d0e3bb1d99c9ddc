"""Command-line front-end.

Subcommands wire the library into a scoring pipeline: score trials from
chunk embeddings, build a normalization cohort, apply AS-Norm, extract
quality features, fit and apply score fusion, evaluate, select distractor
speakers, print training schedules, and generate synthetic data.

Exit codes: 0 success, 1 usage error (bad flags/arguments), 2 data error
(unreadable or malformed inputs, inconsistent contents). Errors go to
stderr; all output files are written atomically.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import asnorm as asnorm_mod
from . import curation, dataio, fusion, metrics, qmf, scoring, synth, trainspec
from .errors import FeatureMismatchError, ToolkitError


@click.group(name="svbackend")
def cli():
    """Speaker-verification back-end toolkit."""


def _read_trials_auto(path: str) -> list[dataio.Trial]:
    return dataio.read_trials(path, expect_labels=dataio.sniff_trial_labels(path))


@cli.command()
@click.option("--embeddings", required=True, help="Embedding store.")
@click.option("--trials", required=True, help="Trial list, labeled or not.")
@click.option("--out", required=True, help="Output score file.")
def score(embeddings, trials, out):
    """Score trials with the chunked pairwise cosine."""
    trial_list = _read_trials_auto(trials)
    records = dataio.read_embeddings(embeddings)
    values = scoring.score_trials(records, trial_list)
    dataio.write_scores(trial_list, values, out)


@cli.command()
@click.option("--embeddings", required=True, help="Embedding store of cohort utterances.")
@click.option("--speakers", required=True, help="Speaker map (utt_id speaker_id).")
@click.option("--per-speaker", default=20, show_default=True, help="Utterances subsampled per speaker.")
@click.option("--seed", default=0, show_default=True, help="Subsampling seed.")
@click.option("--out", required=True, help="Output cohort store (one row per speaker).")
def cohort(embeddings, speakers, per_speaker, seed, out):
    """Build a per-speaker cohort for AS-Norm."""
    records = dataio.read_embeddings(embeddings)
    speaker_map = dataio.read_speaker_map(speakers)
    config = asnorm_mod.AsNormConfig(utterances_per_speaker=per_speaker)
    built = asnorm_mod.build_cohort(records, speaker_map, config, seed)
    rows = [
        dataio.ChunkEmbeddings(spk, built.embeddings[i][None, :])
        for i, spk in enumerate(built.speaker_ids)
    ]
    dataio.write_embeddings(rows, out)


@cli.command(name="asnorm")
@click.option("--scores", required=True, help="Raw score file.")
@click.option("--embeddings", required=True, help="Embedding store covering the scored utterances.")
@click.option("--cohort", "cohort_path", required=True, help="Cohort store from the cohort subcommand.")
@click.option("--top-n", default=100, show_default=True, help="Cohort scores kept per trial side.")
@click.option("--out", required=True, help="Output normalized score file.")
def asnorm_cmd(scores, embeddings, cohort_path, top_n, out):
    """Apply adaptive symmetric score normalization."""
    pairs, raw = dataio.read_scores(scores)
    store = dataio.embeddings_by_id(dataio.read_embeddings(embeddings))
    cohort_records = dataio.read_embeddings(cohort_path)
    built = asnorm_mod.Cohort(
        speaker_ids=tuple(rec.utt_id for rec in cohort_records),
        embeddings=np.stack([rec.mean_embedding() for rec in cohort_records]),
    )
    config = asnorm_mod.AsNormConfig(top_n=top_n)
    means: dict[str, np.ndarray] = {}
    for pair in pairs:
        for utt_id in (pair.enroll_id, pair.test_id):
            if utt_id not in means:
                if utt_id not in store:
                    raise ToolkitError(f"utterance {utt_id!r} missing from embedding store")
                means[utt_id] = store[utt_id].mean_embedding()
    normalized = asnorm_mod.asnorm_trials(
        raw,
        np.stack([means[p.enroll_id] for p in pairs]),
        np.stack([means[p.test_id] for p in pairs]),
        built,
        config,
    )
    dataio.write_scores(pairs, normalized, out)


@cli.command(name="qmf")
@click.option("--embeddings", required=True, help="Embedding store.")
@click.option("--attributes", required=True, help="Attribute CSV.")
@click.option("--schema", required=True, help="Attribute schema sidecar.")
@click.option("--trials", required=True, help="Trial list, labeled or not.")
@click.option("--out", required=True, help="Output per-trial feature CSV.")
def qmf_cmd(embeddings, attributes, schema, trials, out):
    """Extract per-trial quality features."""
    columns = dataio.read_schema(schema)
    table = dataio.read_attributes(attributes, columns)
    trial_list = _read_trials_auto(trials)
    records = dataio.read_embeddings(embeddings)
    names, matrix = qmf.trial_feature_matrix(trial_list, records, table, columns)
    dataio.write_trial_features(trial_list, names, matrix, out)


def _score_feature_columns(
    score_paths: tuple[str, ...],
    reference: list[dataio.Trial] | None,
) -> tuple[list[dataio.Trial], list[str], list[np.ndarray]]:
    """Read score files as feature columns aligned against a reference pair list."""
    names: list[str] = []
    columns: list[np.ndarray] = []
    for path in score_paths:
        pairs, values = dataio.read_scores(path)
        if reference is None:
            reference = pairs
        else:
            dataio.check_score_alignment(reference, pairs, path)
        name = Path(path).stem
        if name in names:
            raise ToolkitError(f"duplicate score feature name {name!r} (from {path})")
        names.append(name)
        columns.append(values)
    assert reference is not None
    return reference, names, columns


def _assemble_raw_features(
    score_paths: tuple[str, ...],
    qmf_path: str | None,
    reference: list[dataio.Trial] | None,
) -> tuple[list[dataio.Trial], list[str], np.ndarray]:
    reference, names, columns = _score_feature_columns(score_paths, reference)
    if qmf_path is not None:
        pairs, qmf_names, matrix = dataio.read_trial_features(qmf_path)
        dataio.check_score_alignment(reference, pairs, qmf_path)
        for name in qmf_names:
            if name in names:
                raise ToolkitError(f"duplicate feature name {name!r} (from {qmf_path})")
        names = names + list(qmf_names)
        raw = np.column_stack(columns + [matrix])
    else:
        raw = np.column_stack(columns)
    return reference, names, raw


@cli.command(name="fuse-fit")
@click.option("--scores", multiple=True, required=True, help="Score file per system (repeatable).")
@click.option("--qmf", "qmf_path", default=None, help="Per-trial feature CSV from the qmf subcommand.")
@click.option("--trials", required=True, help="Labeled trial list.")
@click.option("--lambda", "lam", default=0.01, show_default=True, help="L1 penalty weight.")
@click.option("--max-iters", default=100000, show_default=True, help="Iteration cap.")
@click.option("--tol", default=1e-9, show_default=True, help="Objective improvement stop threshold.")
@click.option("--out", required=True, help="Output model JSON.")
def fuse_fit(scores, qmf_path, trials, lam, max_iters, tol, out):
    """Fit L1 logistic fusion on labeled trials."""
    trial_list = dataio.read_trials(trials, expect_labels=True)
    _, names, raw = _assemble_raw_features(scores, qmf_path, trial_list)
    labels = np.array([t.label for t in trial_list], dtype=bool)
    params = qmf.minmax_fit(raw, names)
    problem = fusion.FusionProblem(
        features=qmf.minmax_apply(raw, params),
        labels=labels,
        lam=lam,
        feature_names=tuple(names),
    )
    fitted = fusion.fit(problem, max_iters=max_iters, tol=tol)
    model = dataio.FusionModel(
        feature_names=tuple(names),
        weights=fitted.weights,
        intercept=fitted.intercept,
        feature_min=params.lo,
        feature_max=params.hi,
        medians=params.median,
        lam=lam,
    )
    dataio.save_fusion_model(model, out)


@cli.command(name="fuse-apply")
@click.option("--model", "model_path", required=True, help="Model JSON from fuse-fit.")
@click.option("--scores", multiple=True, required=True, help="Score file per system (repeatable).")
@click.option("--qmf", "qmf_path", default=None, help="Per-trial feature CSV.")
@click.option("--out", required=True, help="Output fused score file (probabilities).")
def fuse_apply(model_path, scores, qmf_path, out):
    """Apply a fitted fusion model; emits per-trial probabilities."""
    model = dataio.load_fusion_model(model_path)
    pairs, names, raw = _assemble_raw_features(scores, qmf_path, None)
    if len(names) != len(model.feature_names):
        raise FeatureMismatchError(
            f"model expects {len(model.feature_names)} features, got {len(names)}"
        )
    for i, (expected, got) in enumerate(zip(model.feature_names, names)):
        if expected != got:
            raise FeatureMismatchError(f"feature {i + 1}: model expects {expected!r}, got {got!r}")
    probabilities = fusion.apply_model(raw, model)
    dataio.write_scores(pairs, probabilities, out)


@cli.command(name="eval")
@click.option("--scores", required=True, help="Score file.")
@click.option("--trials", required=True, help="Labeled trial list aligned with the scores.")
@click.option("--p-target", "p_targets", multiple=True, type=float, default=(0.05, 0.01), show_default=True)
def eval_cmd(scores, trials, p_targets):
    """Report EER and minDCF on labeled trials."""
    trial_list = dataio.read_trials(trials, expect_labels=True)
    pairs, values = dataio.read_scores(scores)
    dataio.check_score_alignment(trial_list, pairs, scores)
    labels = np.array([t.label for t in trial_list], dtype=bool)
    report = metrics.evaluate(values, labels, tuple(p_targets))
    parts = [f"EER={report['eer'] * 100.0:.2f}%"]
    for p_target in p_targets:
        parts.append(f"minDCF(p={p_target:g})={report['min_dcf'][p_target]['cost']:.4f}")
    click.echo(" ".join(parts))


@cli.command(name="ddf")
@click.option("--source-emb", required=True, help="Source-corpus embedding store.")
@click.option("--source-spk", required=True, help="Source speaker map.")
@click.option("--target-emb", required=True, help="Target-corpus embedding store.")
@click.option("--target-spk", required=True, help="Target speaker map.")
@click.option("--top-k", default=50, show_default=True, help="Source speakers kept per target.")
@click.option("--dedup", default=0.8, show_default=True, help="Duplicate-identity similarity threshold.")
@click.option("--out", required=True, help="Output selection CSV.")
def ddf(source_emb, source_spk, target_emb, target_spk, top_k, dedup, out):
    """Select source speakers nearest the target domain."""
    source = curation.profiles_from_store(
        dataio.read_embeddings(source_emb), dataio.read_speaker_map(source_spk)
    )
    targets = curation.profiles_from_store(
        dataio.read_embeddings(target_emb), dataio.read_speaker_map(target_spk)
    )
    try:
        config = curation.DdfConfig(top_k=top_k, dedup_threshold=dedup)
    except ValueError as exc:
        raise ToolkitError(str(exc)) from None
    selections = curation.ddf_select(source, targets, config)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["speaker_id", "max_similarity", "nearest_target"])
    for sel in selections:
        writer.writerow([sel.speaker_id, dataio.format_float(sel.max_similarity), sel.nearest_target_id])
    dataio.atomic_write_text(out, buf.getvalue())


@cli.command(name="schedule")
@click.option("--name", required=True, type=click.Choice(["base", "finetune", "staircase"]))
@click.option("--spec", "spec_text", default=None, help="gamma,warmup,plateau,epochs_per for staircase.")
@click.option("--max-lr", default=None, type=float, help="Peak learning rate for staircase.")
@click.option("--epochs", required=True, type=int, help="Number of epochs to print, starting at 0.")
def schedule(name, spec_text, max_lr, epochs):
    """Print an epoch,lr[,margin] CSV for a named schedule."""
    if epochs < 1:
        raise click.UsageError("--epochs must be >= 1")
    lines = []
    if name == "staircase":
        if spec_text is None or max_lr is None:
            raise click.UsageError("staircase requires --spec and --max-lr")
        fields = spec_text.split(",")
        if len(fields) != 4:
            raise click.UsageError("--spec must be gamma,warmup,plateau,epochs_per")
        try:
            spec = trainspec.StaircaseSpec(
                gamma=float(fields[0]),
                warmup_epochs=int(fields[1]),
                plateau_epochs=int(fields[2]),
                epochs_per=int(fields[3]),
                max_lr=max_lr,
            )
        except ValueError as exc:
            raise click.UsageError(f"bad --spec/--max-lr: {exc}") from None
        lines.append("epoch,lr")
        for epoch in range(epochs):
            lines.append(f"{epoch},{dataio.format_float(trainspec.staircase_lr(spec, epoch))}")
    else:
        phase = trainspec.BASE_SCHEDULE if name == "base" else trainspec.FINETUNE_SCHEDULE
        if epochs > phase.total_epochs:
            raise ToolkitError(f"{name} schedule covers {phase.total_epochs} epochs, requested {epochs}")
        lines.append("epoch,lr,margin")
        for epoch in range(epochs):
            lr = trainspec.schedule_lr(phase, epoch)
            margin = trainspec.schedule_margin(phase, epoch)
            lines.append(f"{epoch},{dataio.format_float(lr)},{dataio.format_float(margin)}")
    click.echo("\n".join(lines))


@cli.command(name="synth")
@click.option("--config", "config_path", required=True, help="JSON config file.")
@click.option("--out", "out_dir", required=True, help="Output directory.")
def synth_cmd(config_path, out_dir):
    """Generate a synthetic dataset (store, speaker map, attributes, trials)."""
    text = dataio.read_text(config_path)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ToolkitError(f"{config_path}: invalid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ToolkitError(f"{config_path}: config must be a JSON object")
    trials_spec = payload.pop("trials", None)
    try:
        config = synth.SynthConfig(**payload)
    except (TypeError, ValueError) as exc:
        raise ToolkitError(f"{config_path}: {exc}") from None
    records, speaker_map = synth.gen_dataset(config)
    os.makedirs(out_dir, exist_ok=True)
    dataio.write_embeddings(records, os.path.join(out_dir, "embeddings.txt"))
    dataio.write_speaker_map(speaker_map, os.path.join(out_dir, "speakers.txt"))
    table = synth.gen_attributes(records, speaker_map, config)
    dataio.write_attributes(table, os.path.join(out_dir, "attributes.csv"))
    dataio.write_schema(synth.DEFAULT_SCHEMA, os.path.join(out_dir, "attributes.schema"))
    if trials_spec is not None:
        if not isinstance(trials_spec, dict) or set(trials_spec) - {"n_pos", "n_neg", "seed"}:
            raise ToolkitError(f"{config_path}: trials must be an object with n_pos, n_neg, seed")
        trials = synth.gen_trials(
            records,
            speaker_map,
            int(trials_spec.get("n_pos", 0)),
            int(trials_spec.get("n_neg", 0)),
            int(trials_spec.get("seed", config.seed)),
        )
        dataio.write_trials(trials, os.path.join(out_dir, "trials.txt"))


def main(argv: list[str] | None = None) -> int:
    """Run the CLI, mapping errors to the documented exit codes."""
    try:
        cli.main(args=argv, prog_name="svbackend", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ToolkitError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


def entry() -> None:
    sys.exit(main(sys.argv[1:]))
