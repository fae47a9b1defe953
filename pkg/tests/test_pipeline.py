import copy
import json
import time

import numpy as np
import pytest

from finetec.config import RunConfig
from finetec.nn import NumericError
from finetec.pipeline import STAGES, StageError, load_run, run_all, save_run, build_models
from finetec.complete import CompletionModel, SkeletonBank
from finetec.synth import SynthSpec, gen_synth

from conftest import TINY_CONFIG


def snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_run_directory_layout_and_resume(tmp_path, tiny_config):
    manifest = run_all(tiny_config, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(STAGES + ("manifest.json",))
    assert list(manifest["stages"]) == list(STAGES)
    assert manifest["config_hash"] == tiny_config.hash()
    assert set(manifest["seeds"]) == {"synth", "corruption", "completion", "decomposition",
                                      "dynamics", "recognition", "training"}
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk["stages"] == manifest["stages"]
    for sev in ("minor", "moderate", "severe"):
        report = json.loads((tmp_path / "07_eval" / f"eval_{sev}.json").read_text())
        assert 0.0 <= report["top1"] <= 1.0
    assert (tmp_path / "09_plots" / "results.csv").read_text().count("\n") == 4

    before = snapshot(tmp_path)
    mtimes = {p: p.stat().st_mtime_ns for p in tmp_path.rglob("*.bin")}
    start = time.perf_counter()
    again = run_all(tiny_config, tmp_path)
    assert time.perf_counter() - start < 5.0
    assert again["stages"] == manifest["stages"]
    assert snapshot(tmp_path) == before
    assert {p: p.stat().st_mtime_ns for p in tmp_path.rglob("*.bin")} == mtimes


def test_config_change_reruns_only_downstream(tmp_path, tiny_config):
    run_all(tiny_config, tmp_path)
    synth_bytes = (tmp_path / "01_synth" / "train.jsonl").stat().st_mtime_ns
    data = copy.deepcopy(TINY_CONFIG)
    data["training"]["epochs"] = 1
    changed = RunConfig.from_dict(data)
    manifest = run_all(changed, tmp_path)
    assert manifest["config_hash"] != tiny_config.hash()
    assert (tmp_path / "01_synth" / "train.jsonl").stat().st_mtime_ns == synth_bytes
    assert len(json.loads((tmp_path / "06_train" / "history.json").read_text())["train_loss"]) == 1


def test_tampered_output_is_rebuilt(tmp_path, tiny_config):
    run_all(tiny_config, tmp_path)
    target = tmp_path / "03_corrupt" / "val_minor.jsonl"
    good = target.read_bytes()
    target.write_text("")
    run_all(tiny_config, tmp_path)
    assert target.read_bytes() == good


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_failing_stage_is_named_and_keeps_partial_artifacts(tmp_path):
    data = copy.deepcopy(TINY_CONFIG)
    data["training"]["lr"] = 1e300
    with pytest.raises(StageError) as info:
        run_all(RunConfig.from_dict(data), tmp_path)
    assert info.value.stage == "06_train"
    assert isinstance(info.value.cause, NumericError)
    assert (tmp_path / "05_decompose" / "severe_pred.jsonl").is_file()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert list(manifest["stages"]) == list(STAGES[:5])


def test_save_and_load_run(tmp_path, tiny_config):
    train_set, _ = gen_synth(SynthSpec(num_classes=3, per_class=5, T=8))
    bank = SkeletonBank.from_sequences(train_set, 8)
    models = build_models(tiny_config, CompletionModel(8, embed=8, blocks=1, seed=0), bank, 3)
    save_run(models, tiny_config, {"train_loss": []}, tmp_path)
    loaded, cfg = load_run(tmp_path)
    assert cfg == tiny_config
    assert np.array_equal(loaded.gcn.flat(), models.gcn.flat())
    assert np.array_equal(loaded.completion.flat(), models.completion.flat())
    assert len(loaded.bank) == len(bank)


@pytest.mark.slow
def test_default_config_finishes_within_ten_minutes(tmp_path):
    start = time.perf_counter()
    run_all(RunConfig(), tmp_path)
    elapsed = time.perf_counter() - start
    print(f"default run_all took {elapsed:.1f} s")
    assert elapsed < 600
