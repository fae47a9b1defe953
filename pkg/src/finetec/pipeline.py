"""End-to-end orchestration with a resumable, hash-checked run directory.

Every stage reads its inputs from earlier stage directories and writes its
outputs into its own directory. ``manifest.json`` records, per stage, a hash
of the stage's inputs (config sections plus upstream file hashes) and the
hashes of its outputs; a rerun skips any stage whose record still matches.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .complete import SkeletonBank, complete_all, pretrain_completion
from .config import RunConfig
from .core import read_sequences, write_sequences
from .corrupt import SEVERITY_RATES, CorruptionSpec, corrupt_all
from .dynamics import DynamicsModel, FusionHead
from .metrics import restoration_report
from .modelio import load_completion, load_stage2, save_completion, save_stage2
from .plotting import plot_export
from .recognize import (
    GcnModel, PipelineModels, Prepared, decompose_all, evaluate_prepared, train,
)
from .synth import SynthSpec, gen_synth

log = logging.getLogger(__name__)

STAGES = (
    "01_synth", "02_completion", "03_corrupt", "04_complete", "05_decompose",
    "06_train", "07_eval", "08_restore_metrics", "09_plots",
)
VARIANT_FILES = ("base", "dyna", "stat", "pred")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(obj, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ------------------------------------------------------------------ models

def build_models(cfg: RunConfig, completion, bank: SkeletonBank, num_classes: int) -> PipelineModels:
    dyn = DynamicsModel(cfg.dynamics.feature_width, cfg.dynamics.hidden, cfg.dynamics.seed)
    fusion = FusionHead(cfg.dynamics.fusion_width, cfg.dynamics.seed)
    gcn = GcnModel(num_classes, cfg.recognition.channels, seed=cfg.recognition.seed,
                   kernel=cfg.recognition.temporal_kernel)
    return PipelineModels(completion, bank, dyn, fusion, gcn, completion_seed=cfg.completion.seed)


def train_corruption(cfg: RunConfig) -> CorruptionSpec:
    c = cfg.corruption
    return CorruptionSpec(c.rate, c.mode, c.seed)


def save_run(models: PipelineModels, cfg: RunConfig, history: dict, out_dir) -> None:
    """Self-contained trained run: both model files, the bank, config and history."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_completion(models.completion, out / "completion.bin")
    save_stage2(models.dynamics, cfg.dynamics.hidden, models.fusion, models.gcn, out / "models.bin")
    write_sequences(models.bank.sequences, out / "bank.jsonl")
    write_json(cfg.to_dict(), out / "config.json")
    write_json(history, out / "history.json")


def load_run(run_dir) -> tuple[PipelineModels, RunConfig]:
    run = Path(run_dir)
    cfg = RunConfig.load(run / "config.json")
    completion = load_completion(run / "completion.bin")
    bank = SkeletonBank.from_sequences(read_sequences(run / "bank.jsonl"), completion.T)
    dyn, fusion, gcn = load_stage2(run / "models.bin")
    return PipelineModels(completion, bank, dyn, fusion, gcn, completion_seed=cfg.completion.seed), cfg


def read_prepared(prefix) -> Prepared:
    parts = {k: read_sequences(f"{prefix}{k}.jsonl") for k in VARIANT_FILES}
    labels = np.array([s.label if s.label is not None else -1 for s in parts["pred"]], dtype=np.int64)
    return Prepared(*(np.stack([s.frames for s in parts[k]]) for k in VARIANT_FILES), labels)


def write_prepared(prepared: Prepared, ids, prefix) -> None:
    from .core import full_sequence

    for k in VARIANT_FILES:
        arr = getattr(prepared, k)
        seqs = [full_sequence(x, id=i, label=int(y) if y >= 0 else None)
                for x, i, y in zip(arr, ids, prepared.labels)]
        write_sequences(seqs, f"{prefix}{k}.jsonl")


# ------------------------------------------------------------------ stages

@dataclass
class Stage:
    name: str
    sections: tuple       # config sections the stage depends on
    inputs: tuple         # files (relative to run dir) produced upstream
    outputs: tuple        # files (relative to its own dir)
    run: object


def _stages(cfg: RunConfig) -> list[Stage]:
    sev = tuple(cfg.corruption.eval_severities)
    corrupted = tuple(f"03_corrupt/val_{s}.jsonl" for s in sev)
    restored = tuple(f"04_complete/restored_{s}.jsonl" for s in sev)
    decomposed = tuple(f"05_decompose/{s}_{k}.jsonl" for s in sev for k in VARIANT_FILES)
    evals = tuple(f"07_eval/eval_{s}.json" for s in sev)
    metrics = tuple(f"08_restore_metrics/metrics_{s}.json" for s in sev)

    def synth(root, out):
        s = cfg.synth
        tr, va = gen_synth(SynthSpec(s.num_classes, s.per_class, s.T, s.seed, s.noise))
        write_sequences(tr, out / "train.jsonl")
        write_sequences(va, out / "val.jsonl")

    def completion(root, out):
        bank = SkeletonBank.from_sequences(read_sequences(root / "01_synth/train.jsonl"))
        res = pretrain_completion(bank, cfg.completion)
        save_completion(res.model, out / "completion.bin")
        write_json({"loss": res.history}, out / "history.json")

    def corrupt_stage(root, out):
        val = read_sequences(root / "01_synth/val.jsonl")
        for s in sev:
            spec = CorruptionSpec(SEVERITY_RATES[s], cfg.corruption.mode, cfg.corruption.seed)
            write_sequences(corrupt_all(val, spec), out / f"val_{s}.jsonl")

    def complete_stage(root, out):
        model = load_completion(root / "02_completion/completion.bin")
        bank = SkeletonBank.from_sequences(read_sequences(root / "01_synth/train.jsonl"), model.T)
        for s in sev:
            seqs = read_sequences(root / f"03_corrupt/val_{s}.jsonl")
            write_sequences(complete_all(model, seqs, bank, seed=cfg.completion.seed), out / f"restored_{s}.jsonl")

    def decompose_stage(root, out):
        strong, weak = cfg.decomposition.specs()
        for s in sev:
            seqs = read_sequences(root / f"04_complete/restored_{s}.jsonl")
            prepared = decompose_all(seqs, cfg.decomposition.seed, strong, weak, stream=("eval",))
            write_prepared(prepared, [q.id for q in seqs], out / f"{s}_")

    def train_stage(root, out):
        tr = read_sequences(root / "01_synth/train.jsonl")
        va = read_sequences(root / "01_synth/val.jsonl")
        completion_model = load_completion(root / "02_completion/completion.bin")
        bank = SkeletonBank.from_sequences(tr, completion_model.T)
        models = build_models(cfg, completion_model, bank, cfg.synth.num_classes)
        strong, weak = cfg.decomposition.specs()
        history = train(models, tr, va, cfg.training, train_corruption(cfg), strong, weak)
        save_stage2(models.dynamics, cfg.dynamics.hidden, models.fusion, models.gcn, out / "models.bin")
        write_json(history.to_dict(), out / "history.json")

    def eval_stage(root, out):
        completion_model = load_completion(root / "02_completion/completion.bin")
        dyn, fusion, gcn = load_stage2(root / "06_train/models.bin")
        models = PipelineModels(completion_model, None, dyn, fusion, gcn, cfg.completion.seed)
        for s in sev:
            report = evaluate_prepared(models, read_prepared(root / f"05_decompose/{s}_"))
            write_json(report, out / f"eval_{s}.json")

    def metrics_stage(root, out):
        clean = {q.id: q for q in read_sequences(root / "01_synth/val.jsonl")}
        for s in sev:
            restored = read_sequences(root / f"04_complete/restored_{s}.jsonl")
            report = restoration_report([r.frames for r in restored], [clean[r.id].frames for r in restored])
            write_json(report.to_dict(), out / f"metrics_{s}.json")

    def plots_stage(root, out):
        reports = []
        for s in sev:
            row = read_json(root / f"07_eval/eval_{s}.json")
            row.update(read_json(root / f"08_restore_metrics/metrics_{s}.json"))
            reports.append((s, row))
        plot_export(reports, out)

    data = ("01_synth/train.jsonl", "01_synth/val.jsonl")
    model = ("02_completion/completion.bin",)
    return [
        Stage("01_synth", ("synth",), (), ("train.jsonl", "val.jsonl"), synth),
        Stage("02_completion", ("completion",), data[:1], ("completion.bin", "history.json"), completion),
        Stage("03_corrupt", ("corruption",), data[1:], tuple(p.split("/")[1] for p in corrupted), corrupt_stage),
        Stage("04_complete", ("completion",), data[:1] + model + corrupted,
              tuple(p.split("/")[1] for p in restored), complete_stage),
        Stage("05_decompose", ("decomposition",), restored, tuple(p.split("/")[1] for p in decomposed),
              decompose_stage),
        Stage("06_train", ("synth", "corruption", "completion", "decomposition", "dynamics", "recognition",
                           "training"), data + model, ("models.bin", "history.json"), train_stage),
        Stage("07_eval", ("completion",), model + ("06_train/models.bin",) + decomposed,
              tuple(p.split("/")[1] for p in evals), eval_stage),
        Stage("08_restore_metrics", (), data[1:] + restored,
              tuple(p.split("/")[1] for p in metrics), metrics_stage),
        Stage("09_plots", (), evals + metrics, ("results.csv", "top1.svg"), plots_stage),
    ]


def _inputs_hash(stage: Stage, cfg: RunConfig, root: Path) -> str:
    doc = cfg.to_dict()
    payload = {
        "stage": stage.name,
        "config": {k: doc[k] for k in stage.sections},
        "inputs": {p: file_hash(root / p) for p in stage.inputs},
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _is_current(record: dict | None, inputs_hash: str, out: Path) -> bool:
    if not record or record.get("inputs") != inputs_hash:
        return False
    outputs = record.get("outputs", {})
    return all((out / name).is_file() and file_hash(out / name) == h for name, h in outputs.items())


def run_all(cfg: RunConfig, run_dir, resume: bool = True) -> dict:
    """Run every stage in order; return the manifest.

    Completed stages whose inputs are unchanged are skipped when ``resume``.
    A failing stage raises StageError; earlier outputs stay on disk.
    """
    root = Path(run_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest_path = root / "manifest.json"
    previous = {}
    if resume and manifest_path.is_file():
        try:
            previous = read_json(manifest_path).get("stages", {})
        except (json.JSONDecodeError, AttributeError):
            previous = {}
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seeds": {name: section["seed"] for name, section in cfg.to_dict().items() if "seed" in section},
        "stages": {},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    for stage in _stages(cfg):
        out = root / stage.name
        try:
            inputs_hash = _inputs_hash(stage, cfg, root)
            if resume and _is_current(previous.get(stage.name), inputs_hash, out):
                log.info("stage %s up to date, skipping", stage.name)
                manifest["stages"][stage.name] = previous[stage.name]
                continue
            log.info("stage %s running", stage.name)
            out.mkdir(exist_ok=True)
            stage.run(root, out)
            record = {"inputs": inputs_hash, "outputs": {n: file_hash(out / n) for n in stage.outputs}}
        except Exception as exc:
            write_json(manifest, manifest_path)
            raise StageError(stage.name, exc) from exc
        manifest["stages"][stage.name] = record
        write_json(manifest, manifest_path)
    return manifest
