"""Dataset generation, training and evaluation of every method on a shared test split."""
from __future__ import annotations

import json
import logging
import platform
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..acoustics import render_mixture, sample_scene
from ..dataset import read_dataset, write_dataset
from ..errors import ConfigError, ExperimentError, SoundLocError
from ..model import best_assignment, evaluate_loss, load_model, predict_features, prepare_features, train
from ..multilat import localize_pipeline
from .config import ExperimentConfig
from .metrics import MetricsReport, errors_cm, summarize
from .results import emit_results, write_trials

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
_SPLIT_OFFSET = {"train": 0, "val": 200_000, "test": 400_000}
MAX_FAILURE_RATE = 0.2


def scene_seed(config: ExperimentConfig, split: str, index: int) -> int:
    return config.data_seed * 1_000_000 + _SPLIT_OFFSET[split] + index


def signal_kind(config: ExperimentConfig, split: str) -> str:
    """White noise everywhere, except unseen speech-like test signals in ``unknown_source_signal``."""
    if config.scenario == "unknown_source_signal" and split == "test":
        return "speech_like_ar"
    return "white_noise"


def build_recording(config: ExperimentConfig, seed: int, kind: str = "white_noise"):
    """Render one scene: the first ``M`` of ``mic_pool`` microphones, ``U`` of them faulty."""
    room = config.room_spec
    scene = sample_scene(room, config.mic_pool, config.K, 0, seed=seed, n_samples=config.n_samples,
                         signal_kind=kind)
    mics = scene.mics[:config.M]
    if config.U:
        faulty = set(np.random.default_rng([seed, 1]).choice(config.M, config.U, replace=False).tolist())
        mics = [replace(m, known_position=i not in faulty) for i, m in enumerate(mics)]
    return render_mixture(room, mics, scene.sources, noise_std=config.noise_std, seed=seed)


def generate_splits(config: ExperimentConfig, training: bool = True) -> dict:
    """Render every split; with ``training=False`` the train and val splits stay empty."""
    sizes = {"train": config.n_train if training else 0, "val": config.n_val if training else 0,
             "test": config.n_test}
    return {split: [build_recording(config, scene_seed(config, split, i), signal_kind(config, split))
                    for i in range(sizes[split])]
            for split in SPLITS}


def save_splits(splits: dict, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split, recs in splits.items():
        write_dataset(recs, directory / f"{split}.slds")
    return directory


def load_splits(directory) -> dict:
    directory = Path(directory)
    missing = [s for s in SPLITS if not (directory / f"{s}.slds").exists()]
    if missing:
        raise ConfigError(f"dataset directory {directory} lacks {missing}")
    return {s: read_dataset(directory / f"{s}.slds") for s in SPLITS}


def obtain_splits(config: ExperimentConfig) -> dict:
    """Load ``config.dataset`` (or ``<output>/data``) if present, else generate.

    Training splits are only rendered when the neural method is requested.
    """
    for candidate in (config.dataset, str(Path(config.output) / "data")):
        if candidate and all((Path(candidate) / f"{s}.slds").exists() for s in SPLITS):
            log.info("loading dataset from %s", candidate)
            return load_splits(candidate)
    if config.dataset:
        raise ConfigError(f"dataset directory {config.dataset} is incomplete")
    return generate_splits(config, training="neural" in config.methods)


def train_neural(config: ExperimentConfig, splits: dict, output: Path | None = None):
    """Train on the train split; returns (model, TrainResult, validation loss terms)."""
    mc = config.model_config
    if not splits["train"]:
        raise ConfigError("the neural method needs n_train >= 1")
    feats = prepare_features(splits["train"], mc)
    ckpt = output / "model.ckpt" if output else None
    logf = output / "train_log.jsonl" if output else None
    if logf and logf.exists():
        logf.unlink()
    result = train(feats, mc, config.epochs, seed=config.train_seed, batch_size=config.batch_size,
                   checkpoint_path=ckpt, log_path=logf)
    val = evaluate_loss(result.model, prepare_features(splits["val"], mc)) if splits["val"] else {}
    return result.model, result, val


def _record(trial, seed, method, target, index, pred=None, truth=None, message=""):
    rec = {"trial": int(trial), "scene_seed": int(seed), "method": method, "target": target, "index": int(index),
           "pred": None, "truth": None, "error_cm": None, "status": "failed" if pred is None else "ok",
           "message": message}
    if truth is not None:
        rec["truth"] = [float(v) for v in truth]
    if pred is not None:
        rec["pred"] = [float(v) for v in pred]
        rec["error_cm"] = float(errors_cm(pred, truth)[0])
    return rec


def _neural_records(config: ExperimentConfig, test: list, model) -> list:
    mc = model.config
    records = []
    try:
        feats = prepare_features(test, mc)
        src, mics = predict_features(model, feats)
    except SoundLocError as exc:
        log.warning("neural method failed on the test split: %s", exc)
        src = mics = None
        message = str(exc)
    for i, rec in enumerate(test):
        seed = rec.rng_seed
        if not mc.source_known:
            truth = rec.source_positions
            if src is None:
                records += [_record(i, seed, "neural", "source", k, truth=truth[k], message=message)
                            for k in range(len(truth))]
            else:
                perm = best_assignment(src[i], truth)
                records += [_record(i, seed, "neural", "source", k, src[i][k], truth[perm[k]])
                            for k in range(len(truth))]
        for u in np.flatnonzero(~rec.known_mask):
            truth = rec.mic_positions[u]
            if mics is None:
                records.append(_record(i, seed, "neural", "mic", u, truth=truth, message=message))
            else:
                records.append(_record(i, seed, "neural", "mic", u, mics[i][u], truth))
    return records


def _multilat_records(config: ExperimentConfig, test: list, method: str) -> list:
    """Single-source solver; with K > 1 its one estimate is scored against every source."""
    solver = config.solver_config
    if method == "multilat_robust":
        solver = replace(solver, robust_loss="huber")
    records = []
    for i, rec in enumerate(test):
        truth = rec.source_positions
        try:
            pos = localize_pipeline(rec, solver).position
            if not np.all(np.isfinite(pos)):
                raise ExperimentError("solver returned a non-finite position")
        except (SoundLocError, np.linalg.LinAlgError) as exc:
            records += [_record(i, rec.rng_seed, method, "source", k, truth=truth[k], message=str(exc))
                        for k in range(len(truth))]
            continue
        records += [_record(i, rec.rng_seed, method, "source", k, pos, truth[k]) for k in range(len(truth))]
    return records


def evaluate(config: ExperimentConfig, test: list, model=None) -> list:
    """Per-trial records of every configured method on ``test``."""
    if not test:
        raise ExperimentError("no test trials: n_test is 0")
    records = []
    for method in config.methods:
        if method == "neural":
            if model is None:
                raise ConfigError("the neural method needs a trained model")
            records += _neural_records(config, test, model)
        elif config.source_known:
            log.info("%s predicts sources only; nothing to evaluate in %s", method, config.scenario)
        else:
            records += _multilat_records(config, test, method)
    if not records:
        raise ExperimentError(f"no method produced a prediction target in {config.scenario}")
    return records


def check_failures(records: list) -> None:
    for method in sorted({r["method"] for r in records}):
        mine = [r for r in records if r["method"] == method]
        failed = sum(r["status"] != "ok" for r in mine)
        if failed / len(mine) > MAX_FAILURE_RATE:
            example = next(r["message"] for r in mine if r["status"] != "ok")
            raise ExperimentError(f"{method} failed on {failed}/{len(mine)} trials (first error: {example})")


def manifest(config: ExperimentConfig, extra: dict | None = None) -> dict:
    return {
        "config": config.to_dict(),
        "seeds": {"data": config.data_seed, "train": config.train_seed, "eval": config.eval_seed},
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        **(extra or {}),
    }


def write_outputs(config: ExperimentConfig, records: list, report: MetricsReport, extra: dict | None = None) -> dict:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trials": write_trials(records, out / "trials.jsonl"),
        "report_csv": emit_results(report, out / "report.csv", "csv"),
        "report_jsonl": emit_results(report, out / "report.jsonl", "jsonl"),
        "manifest": out / "manifest.json",
    }
    paths["manifest"].write_text(json.dumps(manifest(config, extra), indent=2, sort_keys=True) + "\n")
    return paths


def run_experiment(config: ExperimentConfig, write: bool = True) -> tuple:
    """Generate (or load) data, train if needed, evaluate every method, write artifacts.

    Returns ``(report, records, model)``. Per-trial failures are recorded, but
    more than 20% failed trials for any method raises :class:`ExperimentError`
    after the records are written.
    """
    t0 = time.perf_counter()
    out = Path(config.output)
    splits = obtain_splits(config)
    model, extra = None, {}
    if "neural" in config.methods:
        if config.checkpoint:
            model = load_model(config.checkpoint)
        else:
            if write:
                out.mkdir(parents=True, exist_ok=True)
            model, result, val = train_neural(config, splits, out if write else None)
            extra = {"initial_loss": result.initial_loss, "final_loss": result.final_loss, "val_loss": val}
    records = evaluate(config, splits["test"], model)
    report = summarize(records, config.scenario, time.perf_counter() - t0, seed=config.eval_seed)
    if write:
        write_outputs(config, records, report, extra)
    check_failures(records)
    return report, records, model


def rerun_from_manifest(path, output=None) -> tuple:
    """Repeat an experiment from its manifest (optionally into a new output directory)."""
    data = json.loads(Path(path).read_text())
    config = ExperimentConfig.from_dict(data["config"])
    if output is not None:
        config = replace(config, output=str(output))
    return run_experiment(config)


def run_sweep(config: ExperimentConfig, param: str, values) -> list:
    """One experiment per value of ``param``, each in ``<output>/<param>=<value>``."""
    if param not in config.to_dict():
        raise ConfigError(f"cannot sweep unknown field {param!r}")
    results = []
    for v in values:
        sub = replace(config, **{param: v, "output": str(Path(config.output) / f"{param}={v}")})
        report, _, _ = run_experiment(ExperimentConfig.from_dict(sub.to_dict()))
        results.append((v, report))
    return results
