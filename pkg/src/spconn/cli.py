"""Command-line front end wiring the pipeline end to end.

Subcommands mirror the pipeline stages: synth-gen, parcellate, extract,
train, ensemble-predict, evaluate, bootstrap, saliency. Every command is
deterministic given its flags and seeds, never mutates its inputs, and
emits a run record next to its outputs. CONNECTOME_SEED serves as the
global seed fallback.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import fields as dataclass_fields
from pathlib import Path

import click
import numpy as np
from joblib import Parallel, delayed

from . import connectome, ensemble, models, saliency as saliency_mod, synth
from .parcellation import SamplingConfig, sample_parcellation, write_sidecar
from .volume_io import (
    FormatError,
    LabelVolume,
    Manifest,
    MaskVolume,
    read_manifest,
    read_volume,
    write_volume,
)

FEATURE_FILES = {
    "vector": "{sid}.vec.txt",
    "matrix": "{sid}.mat.cvol",
    "fingerprint": "{sid}.fp.cvol",
}


def _seed_value(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("CONNECTOME_SEED")
    return int(env) if env else 0


def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_run_record(out_dir: Path, command: str, config: dict,
                      seeds, outputs: list[str], started: float) -> None:
    record = {
        "command": command,
        "argv": sys.argv[1:],
        "config_digest": _digest(config),
        "seeds": seeds,
        "elapsed_s": round(time.time() - started, 3),
        "outputs": sorted(outputs),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"run_record_{command}.json"
    path.write_text(json.dumps(record, indent=1, sort_keys=True) + "\n", "utf-8")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read config {path}: {exc}")


@click.group()
def main():
    """Stochastic-parcellation connectome prediction pipeline."""


# ---------------------------------------------------------------- synth-gen
@main.command("synth-gen")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON overriding SynthConfig fields.")
@click.option("--out", "out_dir", type=click.Path(), help="Output directory.")
@click.option("--seed", type=int, default=None, help="Dataset seed.")
@click.option("--print-config", is_flag=True, help="Dump the effective config.")
def synth_gen(config_path, out_dir, seed, print_config):
    """Generate a synthetic dataset with planted connectivity signal."""
    started = time.time()
    overrides = _load_json(config_path) if config_path else {}
    if seed is not None or "seed" not in overrides:
        overrides["seed"] = _seed_value(seed)
    known = {f.name for f in dataclass_fields(synth.SynthConfig)}
    unknown = set(overrides) - known
    if unknown:
        raise click.ClickException(f"unknown synth config fields: {sorted(unknown)}")
    for key in ("dims", "spacing", "rho_range"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    try:
        cfg = synth.SynthConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"bad synth config: {exc}")
    cfg_doc = {f.name: getattr(cfg, f.name) for f in dataclass_fields(cfg)}
    cfg_doc = json.loads(json.dumps(cfg_doc, default=list))
    if print_config:
        click.echo(json.dumps(cfg_doc, indent=1, sort_keys=True))
        return
    if out_dir is None:
        raise click.UsageError("--out is required")
    out = Path(out_dir)
    manifest = synth.write_dataset(cfg, out)
    outputs = [str(out / "manifest.json"), str(out / "truth.json"),
               str(out / "gray_mask.cvol")] + \
        [str(s.bold_path) for s in manifest.subjects]
    _write_run_record(out, "synth-gen", cfg_doc, {"seed": cfg.seed},
                      outputs, started)
    click.echo(f"wrote {len(manifest.subjects)} subjects to {out}")


# ---------------------------------------------------------------- parcellate
def _one_parcellation(mask: MaskVolume, regions: int, seed: int,
                      tolerance: float, eta: float, out_dir: Path) -> str:
    cfg = SamplingConfig(target_regions=regions, seed=seed,
                         region_tolerance=tolerance, packing_eta=eta)
    result = sample_parcellation(mask, cfg)
    pid = f"parc_R{regions}_s{seed}"
    result = dataclasses.replace(result, parcellation_id=pid)
    write_volume(out_dir / f"{pid}.cvol", result.labels)
    write_sidecar(out_dir / f"{pid}.json", result)
    if not result.converged:
        click.echo(f"warning: {pid} realized {result.num_regions} regions "
                   f"(target {regions}) without converging", err=True)
    return pid


@main.command()
@click.option("--mask", "mask_path", type=click.Path(exists=True), required=True)
@click.option("--regions", type=int, default=None, help="Single region count.")
@click.option("--scales", default=None,
              help="Comma-separated region counts for batch mode.")
@click.option("--count", type=int, default=1,
              help="Parcellations per scale (seeds seed..seed+count-1).")
@click.option("--seeds", default=None, help="Explicit comma-separated seeds.")
@click.option("--seed", type=int, default=None, help="First seed for --count.")
@click.option("--tolerance", type=float, default=0.05)
@click.option("--eta", type=float, default=None,
              help="Packing constant override for the radius estimate.")
@click.option("--jobs", type=int, default=1)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def parcellate(mask_path, regions, scales, count, seeds, seed, tolerance,
               eta, jobs, out_dir):
    """Draw stochastic parcellations over a mask (one per scale and seed)."""
    started = time.time()
    if (regions is None) == (scales is None):
        raise click.UsageError("give exactly one of --regions or --scales")
    volume = read_volume(mask_path)
    if not isinstance(volume, MaskVolume):
        raise click.ClickException(f"{mask_path} is not a mask volume")
    scale_list = [regions] if regions is not None else \
        [int(s) for s in scales.split(",") if s]
    if seeds is not None:
        seed_list = [int(s) for s in seeds.split(",") if s]
    else:
        base = _seed_value(seed)
        seed_list = list(range(base, base + count))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .parcellation import DEFAULT_PACKING_ETA

    eta_val = DEFAULT_PACKING_ETA if eta is None else eta
    tasks = [(r, s) for r in scale_list for s in seed_list]
    try:
        pids = Parallel(n_jobs=jobs)(
            delayed(_one_parcellation)(volume, r, s, tolerance, eta_val, out)
            for r, s in tasks)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    config = {"scales": scale_list, "seeds": seed_list,
              "tolerance": tolerance, "eta": eta_val}
    outputs = [str(out / f"{p}.cvol") for p in pids]
    _write_run_record(out, "parcellate", config, {"seeds": seed_list},
                      outputs, started)
    click.echo(f"wrote {len(pids)} parcellations to {out}")


# ------------------------------------------------------------------- extract
def _extract_subject(record, labels: LabelVolume, kind: str,
                     mask: MaskVolume | None, out_dir: Path) -> str:
    bold = read_volume(record.bold_path)
    feats = connectome.subject_features(bold, labels, kind, mask)
    name = FEATURE_FILES[kind].format(sid=record.id)
    path = out_dir / name
    if kind == "vector":
        np.savetxt(path, feats, fmt="%.9e")
    elif kind == "matrix":
        connectome.write_matrix(path, feats)
    else:
        write_volume(path, feats)
    return name


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              required=True)
@click.option("--parcellation", "parc_path", type=click.Path(exists=True),
              required=True)
@click.option("--features", "kind",
              type=click.Choice(["fingerprint", "matrix", "vector"]),
              required=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None,
              help="Gray mask for fingerprints (defaults to the parcel support).")
@click.option("--jobs", type=int, default=1)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def extract(manifest_path, parc_path, kind, mask_path, jobs, out_dir):
    """Extract per-subject features in the requested representation."""
    started = time.time()
    try:
        manifest = read_manifest(manifest_path)
    except FormatError as exc:
        raise click.ClickException(str(exc))
    labels = read_volume(parc_path)
    if not isinstance(labels, LabelVolume):
        raise click.ClickException(f"{parc_path} is not a label volume")
    if labels.meta != manifest.grid:
        raise click.ClickException("parcellation grid does not match manifest")
    mask = None
    if mask_path is not None:
        mask = read_volume(mask_path)
        if not isinstance(mask, MaskVolume):
            raise click.ClickException(f"{mask_path} is not a mask volume")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = Parallel(n_jobs=jobs)(
        delayed(_extract_subject)(rec, labels, kind, mask, out)
        for rec in manifest.subjects)
    index = {
        "kind": kind,
        "parcellation_id": Path(parc_path).stem,
        "num_regions": labels.num_regions,
        "manifest": str(Path(manifest_path).resolve()),
        "files": {rec.id: name for rec, name in zip(manifest.subjects, names)},
    }
    (out / "features.json").write_text(
        json.dumps(index, indent=1, sort_keys=True) + "\n", "utf-8")
    _write_run_record(out, "extract",
                      {"kind": kind, "parcellation": Path(parc_path).stem},
                      {}, [str(out / n) for n in names], started)
    click.echo(f"wrote {len(names)} {kind} feature files to {out}")


def _load_feature_index(feat_dir: Path) -> dict:
    index_path = Path(feat_dir) / "features.json"
    if not index_path.exists():
        raise click.ClickException(f"missing feature index {index_path}")
    return _load_json(index_path)


def _load_features(feat_dir: Path, index: dict, subject_ids) -> np.ndarray:
    kind = index["kind"]
    rows = []
    for sid in subject_ids:
        name = index["files"].get(sid)
        if name is None:
            raise click.ClickException(f"features missing for subject {sid}")
        path = Path(feat_dir) / name
        if kind == "vector":
            rows.append(np.loadtxt(path, dtype=np.float64, ndmin=1))
        elif kind == "matrix":
            rows.append(connectome.read_matrix(path).values)
        else:
            fp = read_volume(path, kind="fingerprint")
            rows.append(np.moveaxis(fp.data, -1, 0))
    return np.stack(rows).astype(np.float32 if kind == "fingerprint"
                                 else np.float64)


# --------------------------------------------------------------------- train
TRAIN_CONFIG_KEYS = ("optimizer", "lr", "momentum", "batch_size", "max_epochs",
                     "patience", "max_steps", "val_fraction", "swa_window",
                     "dtype")
RIDGE_CONFIG_KEYS = ("alpha", "fit_intercept", "cv_folds")
TASK_NAMES = {"cls": "classification", "reg": "regression"}


def _effective_train_config(model: str, task: str, overrides: dict) -> dict:
    if model == "ridge":
        config = {"alpha": None, "fit_intercept": True, "cv_folds": 5}
        allowed = set(RIDGE_CONFIG_KEYS)
    else:
        config = {key: None for key in TRAIN_CONFIG_KEYS}
        config.update(models.TRAIN_DEFAULTS[(model, task)])
        config.update({"momentum": 0.9, "batch_size": 64, "max_epochs": 150,
                       "patience": 10, "val_fraction": 0.1, "swa_window": 20,
                       "dtype": "float32"})
        config.setdefault("max_steps", None)
        allowed = set(TRAIN_CONFIG_KEYS)
    unknown = set(overrides) - allowed
    if unknown:
        raise click.ClickException(f"unknown train config keys: {sorted(unknown)}")
    config.update(overrides)
    return config


@main.command()
@click.option("--model", "family", type=click.Choice(list(models.FAMILIES)),
              required=True)
@click.option("--task", type=click.Choice(["cls", "reg"]), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              required=True)
@click.option("--features", "feat_dir", type=click.Path(exists=True),
              required=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--print-config", is_flag=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "ckpt_path", type=click.Path(), default=None)
def train(family, task, manifest_path, feat_dir, config_path, print_config,
          seed, ckpt_path):
    """Train one model on extracted features; writes checkpoint + history."""
    started = time.time()
    task = TASK_NAMES[task]
    overrides = _load_json(config_path) if config_path else {}
    config = _effective_train_config(family, task, overrides)
    if print_config:
        click.echo(json.dumps(config, indent=1, sort_keys=True))
        return
    if ckpt_path is None:
        raise click.UsageError("--out is required")
    try:
        manifest = read_manifest(manifest_path)
    except FormatError as exc:
        raise click.ClickException(str(exc))
    if manifest.task != task:
        raise click.ClickException(
            f"manifest task {manifest.task} does not match --task {task}")
    index = _load_feature_index(Path(feat_dir))
    if index["kind"] != models.FEATURE_KIND[family]:
        raise click.ClickException(
            f"{family} needs {models.FEATURE_KIND[family]} features, "
            f"found {index['kind']}")
    ids = [s.id for s in manifest.subjects]
    X = _load_features(Path(feat_dir), index, ids)
    y = manifest.targets()
    seed_val = _seed_value(seed)
    if family == "ridge":
        alpha = config["alpha"]
        if alpha is None:
            folds = ensemble.kfold_indices(y, config["cv_folds"], seed_val,
                                           stratify=task == "classification")
            alpha = models.ridge_alpha_search(X, y, task, folds)
        cls = models.RidgeClassifier if task == "classification" \
            else models.RidgeRegression
        model = cls(alpha=alpha, fit_intercept=config["fit_intercept"]).fit(X, y)
        history = []
    else:
        model = models.ConnectomeNet(
            family=family, task=task, optimizer=config["optimizer"],
            lr=config["lr"], momentum=config["momentum"],
            batch_size=config["batch_size"], max_epochs=config["max_epochs"],
            patience=config["patience"], max_steps=config["max_steps"],
            val_fraction=config["val_fraction"], swa_window=config["swa_window"],
            dtype=config["dtype"], parcellation_id=index["parcellation_id"],
            seed=seed_val)
        try:
            model.fit(X, y)
        except (models.TrainingDiverged, ValueError) as exc:
            raise click.ClickException(f"training failed: {exc}")
        history = model.history_
    ckpt = Path(ckpt_path)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    models.save_model(ckpt, model, parcellation_id=index["parcellation_id"])
    hist_path = ckpt.with_suffix(ckpt.suffix + ".history.tsv")
    with open(hist_path, "w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain_loss\tval_loss\n")
        for row in history:
            fh.write(f"{row['epoch']}\t{row['train_loss']:.6e}\t"
                     f"{row['val_loss']:.6e}\n")
    _write_run_record(ckpt.parent, "train",
                      {"model": family, "task": task, "config": config},
                      {"seed": seed_val}, [str(ckpt), str(hist_path)], started)
    click.echo(f"saved {family} checkpoint to {ckpt}")


# ----------------------------------------------------------- ensemble-predict
def _parse_members(member_args) -> list[tuple[Path, Path]]:
    members = []
    for arg in member_args:
        if "=" not in arg:
            raise click.UsageError(
                f"--member takes CKPT=FEATURE_DIR, got {arg!r}")
        ckpt, feat = arg.split("=", 1)
        ckpt_path, feat_path = Path(ckpt), Path(feat)
        if not ckpt_path.exists():
            raise click.ClickException(f"missing checkpoint {ckpt_path}")
        if not feat_path.exists():
            raise click.ClickException(f"missing feature dir {feat_path}")
        members.append((ckpt_path, feat_path))
    if not members:
        raise click.UsageError("need at least one --member")
    return members


def _member_predictions(members, manifest: Manifest):
    """Per-member predictions: probabilities for classification, values
    for regression. Validates task homogeneity and feature pairing."""
    ids = [s.id for s in manifest.subjects]
    rows = []
    for ckpt_path, feat_dir in members:
        model = models.load_model(ckpt_path)
        meta = models.model_meta(ckpt_path)
        if meta.get("task") != manifest.task:
            raise click.ClickException(
                f"member {ckpt_path.name} task {meta.get('task')} does not "
                f"match manifest task {manifest.task}")
        index = _load_feature_index(feat_dir)
        family = meta.get("family")
        if index["kind"] != models.FEATURE_KIND[family]:
            raise click.ClickException(
                f"member {ckpt_path.name} needs "
                f"{models.FEATURE_KIND[family]} features")
        member_pid = meta.get("parcellation_id", "")
        if member_pid and member_pid != index["parcellation_id"]:
            raise click.ClickException(
                f"member {ckpt_path.name} was trained with parcellation "
                f"{member_pid}, features use {index['parcellation_id']}")
        X = _load_features(feat_dir, index, ids)
        if manifest.task == "classification":
            rows.append(np.asarray(model.predict_proba(X), dtype=np.float64))
        else:
            rows.append(np.asarray(model.predict(X), dtype=np.float64))
    return np.vstack(rows)


@main.command("ensemble-predict")
@click.option("--member", "member_args", multiple=True,
              help="CKPT=FEATURE_DIR, repeatable.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def ensemble_predict(member_args, manifest_path, out_path):
    """Fuse member predictions: majority vote (cls) or mean (reg)."""
    started = time.time()
    members = _parse_members(member_args)
    manifest = read_manifest(manifest_path)
    preds = _member_predictions(members, manifest)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"# task={manifest.task} members={len(members)}\n")
        if manifest.task == "classification":
            classes = ensemble.fuse_classification(preds)
            mean_prob = preds.mean(axis=0)
            fh.write("id\tclass\tscore\n")
            for sub, c, p in zip(manifest.subjects, classes, mean_prob):
                fh.write(f"{sub.id}\t{c:+d}\t{p:.9e}\n")
        else:
            fused = ensemble.fuse_regression(preds)
            fh.write("id\tprediction\n")
            for sub, v in zip(manifest.subjects, fused):
                fh.write(f"{sub.id}\t{v:.9e}\n")
    _write_run_record(out.parent, "ensemble-predict",
                      {"members": [str(c) for c, _ in members]}, {},
                      [str(out)], started)
    click.echo(f"wrote predictions for {len(manifest.subjects)} subjects")


def _read_predictions(path) -> tuple[str, dict[str, float]]:
    """Parse a predictions file; returns (task, id -> score/prediction)."""
    lines = Path(path).read_text("utf-8").splitlines()
    if not lines or not lines[0].startswith("# task="):
        raise click.ClickException(f"{path} is not a predictions file")
    task = lines[0].split("task=")[1].split()[0]
    scores = {}
    for line in lines[2:]:
        parts = line.split("\t")
        if len(parts) < 2:
            continue
        scores[parts[0]] = float(parts[-1])
    return task, scores


def _aligned_scores(path, manifest: Manifest) -> np.ndarray:
    task, scores = _read_predictions(path)
    if task != manifest.task:
        raise click.ClickException(
            f"{path}: task {task} does not match manifest {manifest.task}")
    try:
        return np.array([scores[s.id] for s in manifest.subjects])
    except KeyError as exc:
        raise click.ClickException(f"{path}: missing prediction for {exc}")


# ------------------------------------------------------------------ evaluate
@main.command()
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              required=True)
@click.option("--roc-out", type=click.Path(), default=None)
def evaluate_cmd(pred_path, manifest_path, roc_out):
    """Metrics for a predictions file: accuracy/AUC or RMSE/MAE."""
    manifest = read_manifest(manifest_path)
    scores = _aligned_scores(pred_path, manifest)
    truth = manifest.targets()
    if manifest.task == "classification":
        report = ensemble.evaluate(scores, truth, manifest.task)
        click.echo(f"n={report.n}")
        click.echo(f"accuracy={report.accuracy:.4f}")
        click.echo(f"auc={report.auc:.4f}")
        if roc_out:
            fpr, tpr = report.roc
            with open(roc_out, "w", encoding="utf-8") as fh:
                fh.write("fpr\ttpr\n")
                for f, t in zip(fpr, tpr):
                    fh.write(f"{f:.9f}\t{t:.9f}\n")
    else:
        report = ensemble.evaluate(scores, truth, manifest.task)
        click.echo(f"n={report.n}")
        click.echo(f"rmse={report.rmse:.4f}")
        click.echo(f"mae={report.mae:.4f}")


# ----------------------------------------------------------------- bootstrap
@main.command()
@click.option("--pred-a", type=click.Path(exists=True), required=True)
@click.option("--pred-b", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              required=True)
@click.option("--metric", type=click.Choice(["accuracy", "auc", "rmse", "mae"]),
              required=True)
@click.option("--replicates", type=int, default=10000)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
def bootstrap(pred_a, pred_b, manifest_path, metric, replicates, seed, out_path):
    """Bootstrap distribution of metric(A) - metric(B) over subjects."""
    started = time.time()
    manifest = read_manifest(manifest_path)
    a = _aligned_scores(pred_a, manifest)
    b = _aligned_scores(pred_b, manifest)
    truth = manifest.targets()
    seed_val = _seed_value(seed)
    try:
        result = ensemble.bootstrap_compare(a, b, truth, metric=metric,
                                            n_boot=replicates, seed=seed_val)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out, result.diffs, fmt="%.9e", header=f"diff_{metric}")
    click.echo(f"metric_a={result.metric_a:.6f}")
    click.echo(f"metric_b={result.metric_b:.6f}")
    click.echo(f"mean_diff={result.diffs.mean():.6f}")
    click.echo(f"frac_a_underperforms={result.frac_a_underperforms:.4f}")
    _write_run_record(out.parent, "bootstrap",
                      {"metric": metric, "replicates": replicates},
                      {"seed": seed_val}, [str(out)], started)


# ------------------------------------------------------------------ saliency
@main.command("saliency")
@click.option("--member", "member_args", multiple=True,
              help="CKPT=FEATURE_DIR, repeatable.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              required=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
def saliency_cmd(member_args, manifest_path, mask_path, out_path):
    """Average input-gradient saliency over subjects and ensemble members."""
    started = time.time()
    members = _parse_members(member_args)
    manifest = read_manifest(manifest_path)
    mask = None
    if mask_path is not None:
        mask = read_volume(mask_path)
    member_maps = []
    for ckpt_path, feat_dir in members:
        model = models.load_model(ckpt_path)
        if model.family != "cnn3d":
            raise click.ClickException(
                f"saliency needs cnn3d members, {ckpt_path.name} is "
                f"{model.family}")
        index = _load_feature_index(feat_dir)
        if index["kind"] != "fingerprint":
            raise click.ClickException(
                f"saliency needs fingerprint features in {feat_dir}")
        subject_maps = []
        for sub in manifest.subjects:
            fp = read_volume(Path(feat_dir) / index["files"][sub.id],
                             kind="fingerprint")
            subject_maps.append(saliency_mod.saliency_map(model, fp, mask))
        member_maps.append(saliency_mod.ensemble_saliency(subject_maps))
    fused = saliency_mod.ensemble_saliency(member_maps)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    saliency_mod.write_saliency(out, fused)
    _write_run_record(out.parent, "saliency",
                      {"members": [str(c) for c, _ in members]}, {},
                      [str(out)], started)
    click.echo(f"wrote saliency map to {out}")


if __name__ == "__main__":
    main()
