import json

import numpy as np
import pytest

from beatbalance.classifier import CnnConfig
from beatbalance.errors import ConfigError, ContractError
from beatbalance.harness import (
    ComparisonTable,
    ExperimentConfig,
    InjectionCurves,
    aggregate_runs,
    balance_to_target,
    injection_steps,
    injection_study,
    render_reports,
    rerender_from_archive,
    run_comparison,
    split_sizes,
    stratified_split,
    write_comparison_csv,
)
from beatbalance.ingest import CLASS_ORDER, HeartbeatClass
from beatbalance.preprocess import BeatDataset, BeatImage

from conftest import tiny_dataset, tiny_image

VEB = HeartbeatClass.VEB
APC = HeartbeatClass.APC

#: Table II class counts
PAPER_COUNTS = {
    HeartbeatClass.APC: 243,
    HeartbeatClass.NORMAL: 1079,
    HeartbeatClass.LBBB: 1051,
    HeartbeatClass.PAB: 895,
    HeartbeatClass.PVC: 1012,
    HeartbeatClass.RBB: 1006,
    HeartbeatClass.VEB: 106,
}

TOY_CNN = CnnConfig(image_size=28, conv_filters=(4, 8), dense_units=16, num_classes=7, kernel=3, max_epochs=3)


# ------------------------------------------------------------------- splits


def test_split_sizes_on_minority_counts():
    assert split_sizes(106) == (74, 11, 21)
    assert split_sizes(243) == (170, 24, 49)
    assert split_sizes(10) == (7, 1, 2)


def test_split_sizes_sum():
    for n in range(3, 300):
        tr, va, te = split_sizes(n)
        assert tr + va + te == n
        assert tr >= 0 and va >= 0 and te >= 0


def test_stratified_split_counts_and_determinism():
    ds = tiny_dataset({VEB: 106, APC: 243}, split="none")
    out = stratified_split(ds, seed=5)
    assert len(out.indices(split="train", label=VEB)) == 74
    assert len(out.indices(split="val", label=VEB)) == 11
    assert len(out.indices(split="test", label=VEB)) == 21
    assert len(out.indices(split="train", label=APC)) == 170
    again = stratified_split(ds, seed=5)
    assert out.splits == again.splits
    different = stratified_split(ds, seed=6)
    assert out.splits != different.splits


def test_stratified_split_requires_three_per_class():
    ds = tiny_dataset({VEB: 2, APC: 50})
    with pytest.raises(ContractError, match=">= 3"):
        stratified_split(ds)


def test_stratified_split_rejects_synthetic_items():
    items = [tiny_image(VEB, seed=i) for i in range(5)]
    items.append(tiny_image(VEB, seed=99, provenance="smote"))
    ds = BeatDataset(items, ["none"] * 5 + ["train"])
    with pytest.raises(ContractError, match="all-real"):
        stratified_split(ds)


# ------------------------------------------------------------------ balance


def balanced_paper_dataset(method="random", target=1000):
    ds = tiny_dataset(PAPER_COUNTS, split="none", size=8)
    ds = stratified_split(ds, seed=3)
    return ds, balance_to_target(ds, method, target=target, seed=1, k_neighbors=5)


def test_balance_paper_counts_random():
    before, after = balanced_paper_dataset("random")
    assert len(after.indices(split="train", label=VEB)) == 1000
    assert len(after.indices(split="train", label=APC)) == 1000
    # 74 real + 926 synthetic / 170 real + 830 synthetic
    assert len([i for i in after.indices(split="train", label=VEB) if not after.items[i].is_synthetic]) == 74
    assert len([i for i in after.indices(split="train", label=APC) if not after.items[i].is_synthetic]) == 170
    assert after.histogram("test") == before.histogram("test")
    assert after.histogram("val") == before.histogram("val")
    # PAB and the other majority classes untouched
    for cls in (HeartbeatClass.PAB, HeartbeatClass.NORMAL):
        assert after.histogram("train")[cls] == before.histogram("train")[cls]


def test_balance_original_is_identity():
    ds = tiny_dataset({VEB: 10, APC: 12}, split="train")
    assert balance_to_target(ds, "original") is ds


def test_balance_total_bookkeeping():
    before, after = balanced_paper_dataset("random")
    added = (1000 - 74) + (1000 - 170)
    assert len(after.indices(split="train")) == len(before.indices(split="train")) + added


def test_balance_adversarial_requires_snapshot():
    ds = tiny_dataset({VEB: 10, APC: 12, HeartbeatClass.NORMAL: 20}, split="train")
    with pytest.raises(ConfigError, match="snapshot"):
        balance_to_target(ds, "adversarial", target=20)


def test_balance_eval_splits_have_real_provenance_only():
    _, after = balanced_paper_dataset("random")
    for split in ("val", "test"):
        for i in after.indices(split=split):
            assert not after.items[i].is_synthetic


# ---------------------------------------------------------------- injection


def test_injection_steps_arithmetic():
    assert injection_steps(74, 150) == [0, 150, 300, 450, 600, 750, 900, 926]
    assert injection_steps(170, 100) == [0, 100, 200, 300, 400, 500, 600, 700, 800, 830]


def test_injection_pool_too_small():
    ds = tiny_dataset({VEB: 6, HeartbeatClass.NORMAL: 10}, size=28)
    splits = ["train"] * len(ds)
    splits[0] = "val"
    splits[1] = "test"
    ds = ds.with_splits(splits)
    with pytest.raises(ContractError, match="pool"):
        injection_study(ds, "VEB", pool=[], step=5, target=20, repeats=1, cnn_config=TOY_CNN)


def test_injection_study_run_count():
    # one step plus baseline, repeats=1 -> exactly 2 training runs
    counts = {VEB: 8, HeartbeatClass.NORMAL: 12}
    ds = tiny_dataset(counts, size=28, split="none")
    ds = stratified_split(ds, seed=0)
    base = len(ds.indices(split="train", label=VEB))
    pool = [tiny_image(VEB, seed=1000 + i, size=28, provenance="adversarial") for i in range(40)]
    target = base + 5
    curves = injection_study(ds, "VEB", pool, step=5, target=target, repeats=1, cnn_config=TOY_CNN, master_seed=1)
    assert curves.counts == [0, 5]
    assert len(curves.runs) == 2
    assert set(curves.mean_f1) == {c.value for c in CLASS_ORDER}


# --------------------------------------------------------------- comparison


def small_experiment_config(methods=("original", "random"), repeats=2):
    return ExperimentConfig(
        repeats=repeats,
        methods=methods,
        balance_target=30,
        minority_classes=("VEB",),
        adversarial_counts={"VEB": 10},
        injection_steps={"VEB": 10},
        master_seed=7,
        cnn=TOY_CNN,
        k_neighbors=3,
    )


@pytest.fixture(scope="module")
def comparison_result():
    ds = tiny_dataset({VEB: 12, HeartbeatClass.NORMAL: 40, HeartbeatClass.PVC: 35}, size=28, split="none")
    return ds, run_comparison(ds, small_experiment_config())


def test_run_comparison_shape(comparison_result):
    _, table = comparison_result
    assert table.methods == ["original", "random"]
    assert len(table.runs) == 4  # 2 methods x 2 repeats
    assert not table.failures
    veb_mean, veb_std = table.cell("VEB", "original")
    assert veb_mean is None or 0.0 <= veb_mean <= 1.0


def test_comparison_aggregation_matches_recomputation(comparison_result):
    _, table = comparison_result
    rebuilt = aggregate_runs(table.runs, table.methods, table.repeats)
    for method in table.methods:
        for a, b in zip(table.mean[method], rebuilt.mean[method]):
            assert (a is None and b is None) or abs(a - b) < 1e-12
        assert abs(table.total_mean[method] - rebuilt.total_mean[method]) < 1e-12


def test_comparison_is_deterministic(comparison_result):
    ds, table = comparison_result
    again = run_comparison(ds, small_experiment_config())
    assert json.dumps(table.to_dict(), sort_keys=True) == json.dumps(again.to_dict(), sort_keys=True)


def test_methods_share_split_within_repeat(comparison_result):
    _, table = comparison_result
    by_repeat = {}
    for run in table.runs:
        by_repeat.setdefault(run["metadata"]["repeat"], set()).add(run["metadata"]["split_seed"])
    for seeds in by_repeat.values():
        assert len(seeds) == 1


def test_synthetic_counts_recorded(comparison_result):
    _, table = comparison_result
    for run in table.runs:
        expected = 0 if run["metadata"]["method"] == "original" else None
        counts = run["metadata"]["synthetic_counts"]
        if expected == 0:
            assert counts["VEB"] == 0
        else:
            assert counts["VEB"] > 0


# ---------------------------------------------------------------- reporting


def test_render_reports_files(tmp_path, comparison_result):
    _, table = comparison_result
    curves = InjectionCurves(
        beat_class="VEB",
        counts=[0, 5],
        mean_f1={c.value: [0.5, 0.6] for c in CLASS_ORDER},
    )
    produced = render_reports(table, [curves], tmp_path)
    names = {p.name for p in produced}
    assert "comparison.csv" in names
    assert "runs.json" in names
    assert (tmp_path / "curves" / "veb_injection.svg").exists()
    text = (tmp_path / "comparison.csv").read_text()
    assert text.count("\n") == 9  # header + 7 classes + Total
    assert text.splitlines()[0] == "class,original,random"


def test_rerender_reproduces_csv_byte_identical(tmp_path, comparison_result):
    _, table = comparison_result
    render_reports(table, [], tmp_path / "a")
    rerender_from_archive(tmp_path / "a" / "runs.json", tmp_path / "b")
    assert (tmp_path / "a" / "comparison.csv").read_bytes() == (tmp_path / "b" / "comparison.csv").read_bytes()


def test_empty_curves_gives_table_only(tmp_path, comparison_result):
    _, table = comparison_result
    produced = render_reports(table, [], tmp_path)
    assert {p.name for p in produced} == {"comparison.csv", "runs.json"}
    assert not (tmp_path / "curves").exists()
