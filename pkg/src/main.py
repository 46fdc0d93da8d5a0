"""
apnea-screen command line: `python -m src.main <subcommand> [flags]`

stdout carries machine-readable output only (JSON objects, probability
lines); logs go to stderr and the log file.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .cache import feature_cache, init_cache
from .config.config import RunConfig, apply_overrides, load_run_config, parse_override, settings
from .dsp.alignment import downsample_envelope, estimate_lag
from .errors import ApneaScreenError, ConfigInvalid, CorruptCheckpoint, EmptyDataset, UnknownSubcommand
from .models import EffortEstimatorModel, AudioEncoderModel, load_model
from .nn.checkpoint import save_checkpoint
from .scoring.events import segment_label
from .scoring.folds import FoldSplit, make_folds
from .storage.audio_storage import read_wave
from .storage.manifest_storage import Manifest, load_manifest, save_manifest
from .storage.segment_dataset import SegmentDataset, build_segment_dataset
from .storage.trace_storage import read_effort_trace, read_labels
from .synth.corpus import write_corpus
from .synth.generator import SynthConfig
from .tasks.cross_validation import cross_validate, format_summary, write_summary
from .tasks.evaluation import (
    evaluate_effort_dataset,
    evaluate_nights,
    night_report,
    night_segment_probs,
    oracle_probabilities,
    segment_probabilities,
    write_night_report,
    write_roc_table,
)
from .tasks.training import TrainingHistory, train_effort, train_osa
from .utils.logger import setup_logger

logger = logging.getLogger(__name__)

MODEL_FLAGS = {"audio": "audio_only", "fusion": "latent_fusion"}


def _emit(payload: dict):
    print(json.dumps(payload, sort_keys=True))


def _stamp(config: RunConfig, payload: dict) -> dict:
    return {**payload, "config_hash": config.config_hash(), "seed": config.seed}


def _manifest(args, config: RunConfig) -> Manifest:
    return load_manifest(args.manifest or config.paths.manifest)


def _dataset(args, config: RunConfig, subjects: Optional[List[str]] = None) -> SegmentDataset:
    return build_segment_dataset(_manifest(args, config), config, subjects=subjects, cache=feature_cache)


def _fold(args, config: RunConfig, manifest: Manifest) -> FoldSplit:
    index = config.folds.fold if args.fold is None else args.fold
    splits = make_folds(manifest.subjects(), k=config.folds.k, seed=config.seed)
    if not 0 <= index < len(splits):
        raise ConfigInvalid(f"fold {index} out of range for k={config.folds.k}")
    return splits[index]


def _fold_datasets(args, config: RunConfig) -> Tuple[FoldSplit, SegmentDataset]:
    manifest = _manifest(args, config)
    split = _fold(args, config, manifest)
    dataset = build_segment_dataset(manifest, config, cache=feature_cache)
    return split, dataset


def _checkpoint_out(args, config: RunConfig, name: str) -> Path:
    if args.checkpoint_out:
        return Path(args.checkpoint_out)
    return Path(config.paths.checkpoint_dir) / name


def _write_history(history: TrainingHistory, checkpoint: Path, config: RunConfig) -> Path:
    path = checkpoint.with_suffix(".history.json")
    payload = _stamp(config, history.model_dump(mode="json"))
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _load_classifier(path: str) -> AudioEncoderModel:
    model = load_model(path)
    if not isinstance(model, AudioEncoderModel):
        raise CorruptCheckpoint(f"{path} holds a {model.kind} model, not an OSA classifier")
    return model


def _load_effort(path: str) -> EffortEstimatorModel:
    model = load_model(path)
    if not isinstance(model, EffortEstimatorModel):
        raise CorruptCheckpoint(f"{path} holds a {model.kind} model, not an effort estimator")
    return model


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, config: RunConfig) -> int:
    out_dir = Path(args.out or Path(config.paths.manifest).parent)
    rate_range = None if args.event_rate is not None else tuple(args.event_rate_range)
    try:
        base = SynthConfig(
            seed=config.seed,
            night_duration_s=args.duration_s,
            event_rate_per_h=args.event_rate or 0.0,
            audio_snr_db=args.snr_db,
            sample_rate_hz=config.features.sample_rate_hz,
        )
        path = write_corpus(
            out_dir,
            base,
            n_subjects=args.subjects,
            nights_per_subject=args.nights,
            event_rate_range=rate_range,
            config_hash=config.config_hash(),
            n_workers=args.workers,
        )
    except ValueError as e:
        raise ConfigInvalid(f"invalid synthetic corpus settings: {e}", module="synthgen")
    _emit(_stamp(config, {"manifest": str(path), "subjects": args.subjects, "nights": args.subjects * args.nights}))
    return 0


def _envelope_source(path: str, reference_rate: int) -> Tuple[np.ndarray, int]:
    if Path(path).suffix.lower() == ".wav":
        night = read_wave(path)
        return night.samples, night.sample_rate_hz
    return read_effort_trace(path), reference_rate


def cmd_align(args, config: RunConfig) -> int:
    rate = config.alignment.rate_hz
    audio, audio_rate = _envelope_source(args.audio, args.reference_rate)
    reference, reference_rate = _envelope_source(args.reference, args.reference_rate)
    lag = estimate_lag(
        downsample_envelope(audio, audio_rate, rate),
        downsample_envelope(reference, reference_rate, rate),
        max_lag_s=config.alignment.max_lag_s,
        rate_hz=rate,
    )

    if args.manifest_out:
        if not args.night:
            raise ConfigInvalid("--manifest-out needs --night")
        out = Path(args.manifest_out)
        manifest = _manifest(args, config).rebased(out.parent)
        manifest.entry(args.night).effort_offset_s = lag.lag_s
        save_manifest(manifest, out)
        logger.info(f"Recorded effort offset {lag.lag_s:+.3f} s for {args.night} in {out}")

    _emit(_stamp(config, lag.to_dict()))
    return 0


def cmd_featurize(args, config: RunConfig) -> int:
    dataset = _dataset(args, config)
    count = dataset.materialize(n_workers=args.workers or settings.N_WORKERS)
    _emit(_stamp(config, {
        "segments": count,
        "nights": len(dataset.nights),
        "cache_dir": str(feature_cache.root) if feature_cache.enabled else None,
    }))
    return 0


def cmd_train_effort(args, config: RunConfig) -> int:
    split, dataset = _fold_datasets(args, config)
    model, history = train_effort(dataset.subset(split.train), dataset.subset(split.val), config)
    path = save_checkpoint(
        model, _checkpoint_out(args, config, f"effort_fold{split.fold_index}.ckpt"), config.config_hash()
    )
    _write_history(history, path, config)
    _emit(_stamp(config, {
        "checkpoint": str(path),
        "fold": split.fold_index,
        "best_epoch": history.best_epoch,
        "best_val_ccc": history.best_score,
    }))
    return 0


def cmd_eval_effort(args, config: RunConfig) -> int:
    model = _load_effort(args.checkpoint)
    if args.all:
        dataset, fold = _dataset(args, config), None
    else:
        split, full = _fold_datasets(args, config)
        dataset, fold = full.subset(split.test), split.fold_index
    result = evaluate_effort_dataset(model, dataset, config.effort_training.batch_size)
    _emit(_stamp(config, {**result.model_dump(mode="json"), "row": result.row(), "fold": fold}))
    return 0


def cmd_train_osa(args, config: RunConfig) -> int:
    kind = MODEL_FLAGS[args.model]
    frozen = _load_effort(args.effort_checkpoint) if args.effort_checkpoint else None
    split, dataset = _fold_datasets(args, config)
    model, history = train_osa(
        kind, dataset.subset(split.train), dataset.subset(split.val), config, frozen_effort=frozen
    )
    path = save_checkpoint(
        model, _checkpoint_out(args, config, f"osa_{kind}_fold{split.fold_index}.ckpt"), config.config_hash()
    )
    _write_history(history, path, config)
    _emit(_stamp(config, {
        "checkpoint": str(path),
        "model": kind,
        "fold": split.fold_index,
        "best_epoch": history.best_epoch,
        "best_val_score": history.best_score,
    }))
    return 0


def cmd_predict(args, config: RunConfig) -> int:
    model = _load_classifier(args.checkpoint)
    night = read_wave(args.audio, expected_rate=config.features.sample_rate_hz, total_sleep_time_h=args.tst_h)
    for start_s, prob in night_segment_probs(model, night, config, args.workers):
        print(f"{start_s!r},{prob!r}")
    return 0


def _evaluation_dataset(args, config: RunConfig) -> SegmentDataset:
    if args.fold is None:
        return _dataset(args, config)
    split, dataset = _fold_datasets(args, config)
    return dataset.subset(split.test)


def cmd_evaluate(args, config: RunConfig) -> int:
    dataset = _evaluation_dataset(args, config)
    if args.oracle_labels:
        name, probs = "oracle_labels", oracle_probabilities(dataset)
    else:
        model = _load_classifier(args.checkpoint)
        name = model.kind
        probs = segment_probabilities(model, dataset, batch_size=config.osa_training.batch_size)
    evaluation = evaluate_nights(name, dataset, probs, config, n_workers=args.workers)
    payload = evaluation.model_dump(mode="json")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _emit(payload)
    return 0


def _report_night(args, config: RunConfig):
    """(AudioNight, reference events or None) from --audio or --manifest/--night"""
    rate = config.features.sample_rate_hz
    if args.audio:
        night = read_wave(args.audio, expected_rate=rate, total_sleep_time_h=args.tst_h)
        return night, read_labels(args.labels) if args.labels else None
    if not args.night:
        raise ConfigInvalid("report needs --audio or --night")
    manifest = _manifest(args, config)
    entry = manifest.entry(args.night)
    night = read_wave(
        manifest.resolve(entry.audio_path),
        expected_rate=rate,
        subject_id=entry.subject_id,
        night_id=entry.night_id,
        total_sleep_time_h=entry.total_sleep_time_h,
    )
    events = read_labels(manifest.resolve(entry.labels_path)) if entry.labels_path else None
    return night, events


def cmd_report(args, config: RunConfig) -> int:
    model = _load_classifier(args.checkpoint)
    night, events = _report_night(args, config)
    report = night_report(model, night, config, n_workers=args.workers)

    out_dir = Path(args.out_dir or config.paths.report_dir)
    report_path = write_night_report(report, out_dir / f"{night.night_id}.report.json")
    roc_path = None
    if events is not None:
        starts = [start for start, _ in report.segment_probs]
        labels = [
            segment_label(s, events, config.features.duration_s, config.scoring.label_overlap_s) for s in starts
        ]
        try:
            roc_path = write_roc_table(
                [p for _, p in report.segment_probs],
                labels,
                out_dir / f"{night.night_id}.roc.csv",
                config_hash=config.config_hash(),
                seed=config.seed,
            )
        except ApneaScreenError as e:
            logger.warning(f"ROC table skipped for {night.night_id}: {e}")
    else:
        logger.warning(f"No reference labels for {night.night_id}, ROC table skipped")

    _emit({**report.model_dump(mode="json"), "report_path": str(report_path), "roc_path": roc_path and str(roc_path)})
    return 0


def cmd_cross_validate(args, config: RunConfig) -> int:
    dataset = _dataset(args, config)
    if not (dataset.has_labels() and dataset.has_effort()):
        raise EmptyDataset("cross-validation needs labels and effort references for every night", module="cli")
    summary = cross_validate(dataset, config, k=args.k)
    report_dir = Path(args.out_dir or config.paths.report_dir)
    text_path = write_summary(summary, report_dir)
    sys.stderr.write(format_summary(summary))
    _emit(_stamp(config, {"summary": str(report_dir / "summary.json"), "table": str(text_path), "k": summary.k}))
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "synth": cmd_synth,
    "align": cmd_align,
    "featurize": cmd_featurize,
    "train-effort": cmd_train_effort,
    "eval-effort": cmd_eval_effort,
    "train-osa": cmd_train_osa,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "cross-validate": cmd_cross_validate,
}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON (default: APN_RUN_CONFIG_PATH)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. --set effort_training.lr=0.01")
    common.add_argument("--log-level", help="logging level (default: APN_LOG_LEVEL)")
    common.add_argument("--workers", type=int, help="worker threads (default: APN_N_WORKERS)")
    return common


def _data_flags() -> argparse.ArgumentParser:
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--manifest", help="manifest JSON (default: paths.manifest)")
    data.add_argument("--fold", type=int, help="fold index (default: folds.fold)")
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apnea-screen",
        description="Sensor-free OSA screening from smartphone audio.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="subcommand")
    common = _common_flags()
    data = _data_flags()

    p = subparsers.add_parser("synth", parents=[common], help="write a synthetic corpus and manifest")
    p.add_argument("--out", help="output directory (default: the manifest's directory)")
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--nights", type=int, default=1, help="nights per subject")
    p.add_argument("--duration-s", type=float, default=3600.0)
    p.add_argument("--event-rate", type=float, help="events per hour for every subject")
    p.add_argument("--event-rate-range", type=float, nargs=2, default=[0.0, 30.0], metavar=("LO", "HI"),
                   help="per-subject event rate range when --event-rate is not given")
    p.add_argument("--snr-db", type=float, default=20.0)

    p = subparsers.add_parser("align", parents=[common], help="estimate the lag between audio and a reference")
    p.add_argument("--audio", required=True, help="smartphone wave file")
    p.add_argument("--reference", required=True, help="reference wave file or EFF32 effort trace")
    p.add_argument("--reference-rate", type=int, default=32, help="sample rate of a trace reference")
    p.add_argument("--manifest", help="manifest to copy with the measured offset")
    p.add_argument("--night", help="night whose effort_offset_s is set")
    p.add_argument("--manifest-out", help="where to write the updated manifest copy")

    p = subparsers.add_parser("featurize", parents=[common, data], help="compute and cache log-Mel features")

    p = subparsers.add_parser("train-effort", parents=[common, data], help="train the effort estimator")
    p.add_argument("--checkpoint-out")

    p = subparsers.add_parser("eval-effort", parents=[common, data], help="CCC / RMSE / MAE on held-out segments")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--all", action="store_true", help="evaluate every manifest night instead of the fold's test set")

    p = subparsers.add_parser("train-osa", parents=[common, data], help="train an OSA segment classifier")
    p.add_argument("--model", choices=sorted(MODEL_FLAGS), default="audio")
    p.add_argument("--effort-checkpoint", help="frozen effort estimator (required for --model fusion)")
    p.add_argument("--checkpoint-out")

    p = subparsers.add_parser("predict", parents=[common], help="per-segment probabilities for one recording")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--tst-h", type=float, help="total sleep time in hours")

    p = subparsers.add_parser("evaluate", parents=[common, data], help="segment AUC and night-level AHI metrics")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint")
    source.add_argument("--oracle-labels", action="store_true", help="score the reference labels themselves")
    p.add_argument("--out", help="also write the evaluation JSON here")

    p = subparsers.add_parser("report", parents=[common], help="night report and ROC table")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--audio", help="wave file to report on")
    p.add_argument("--labels", help="reference labels for --audio (enables the ROC table)")
    p.add_argument("--tst-h", type=float, help="total sleep time in hours for --audio")
    p.add_argument("--manifest")
    p.add_argument("--night", help="manifest night to report on")
    p.add_argument("--out-dir", help="default: paths.report_dir")

    p = subparsers.add_parser("cross-validate", parents=[common], help="full k-fold protocol with summary tables")
    p.add_argument("--manifest")
    p.add_argument("--k", type=int, help="number of folds (default: folds.k)")
    p.add_argument("--out-dir", help="default: paths.report_dir")

    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file, then --set overrides, then --seed"""
    config = load_run_config(args.config)
    overrides = dict(parse_override(text) for text in args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "k", None) is not None:
        overrides["folds.k"] = args.k
        if config.folds.fold >= args.k and "folds.fold" not in overrides:
            overrides["folds.fold"] = 0
    return apply_overrides(config, overrides) if overrides else config


def run(command: Optional[str], args: argparse.Namespace) -> int:
    if command not in COMMANDS:
        raise UnknownSubcommand(f"unknown subcommand {command!r}; choose from {', '.join(COMMANDS)}")
    config = resolve_config(args)
    init_cache(config.cache_dir())
    logger.info(f"🚀 {command} (config {config.config_hash()[:12]}, seed {config.seed})")
    status = COMMANDS[command](args, config)
    logger.info(f"✅ {command} finished")
    return status


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logger(getattr(args, "log_level", None) or settings.LOG_LEVEL, settings.LOG_DIR)
    try:
        return run(args.command, args)
    except ApneaScreenError as e:
        logger.error(f"{args.command or 'cli'} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        if isinstance(e, UnknownSubcommand):
            parser.print_usage(sys.stderr)
        return 1
    except OSError as e:
        logger.error(f"{args.command} failed on file I/O: {e}")
        print(f"error: storage: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
