import numpy as np
import pytest

from beatbalance.errors import EmptyDatasetError, IntegrityError
from beatbalance.ingest import EcgRecord, HeartbeatClass
from beatbalance.preprocess import (
    BeatDataset,
    BeatImage,
    PreprocessConfig,
    build_dataset,
    load_dataset,
    rasterize_beat,
    save_dataset,
    segment_beats,
)

from conftest import synthetic_record, tiny_image


# ---------------------------------------------------------------- segmentation


def test_interior_beat_window_centered():
    rec = synthetic_record(n_beats=5, spacing=400)
    pairs = segment_beats(rec)
    assert len(pairs) == 5
    (ann_index, peak, label), window = pairs[0]
    assert window.size == 250
    half = 250 // 2
    np.testing.assert_array_equal(window, rec.signal[peak - half : peak - half + 250])


def test_boundary_beats_skipped():
    signal = np.zeros(1000)
    anns = [(3, HeartbeatClass.NORMAL), (500, HeartbeatClass.NORMAL), (998, HeartbeatClass.NORMAL)]
    rec = EcgRecord("b", 360, signal, anns)
    pairs = segment_beats(rec)
    assert [p for (_, p, _), _ in pairs] == [500]


def test_segment_count_matches_independent_margin_scan():
    # oracle: count annotations whose margins fit, by direct inspection
    rec = synthetic_record(n_beats=40, spacing=130, seed=9)
    window_slices, slice_samples = 25, 10
    half = window_slices * slice_samples // 2
    expected = sum(
        1 for p, _ in rec.annotations if p - half >= 0 and p - half + window_slices * slice_samples <= rec.signal.size
    )
    assert len(segment_beats(rec, window_slices, slice_samples)) == expected


def test_window_slices_must_be_odd():
    rec = synthetic_record(n_beats=2)
    with pytest.raises(ValueError, match="odd"):
        segment_beats(rec, window_slices=24)


# ---------------------------------------------------------------- rasterization


def test_ramp_renders_monotone_staircase():
    img = rasterize_beat(np.linspace(0.0, 1.0, 30), size=16)
    rows_per_col = [np.flatnonzero(img.pixels[:, j]) for j in range(16)]
    # bottom-left start, top-right end
    assert rows_per_col[0].max() == 15
    assert rows_per_col[-1].min() == 0
    tops = [r.min() for r in rows_per_col]
    bottoms = [r.max() for r in rows_per_col]
    assert all(t2 <= t1 for t1, t2 in zip(tops, tops[1:]))
    assert all(b2 <= b1 for b1, b2 in zip(bottoms, bottoms[1:]))


def test_flat_window_renders_center_row():
    img = rasterize_beat(np.full(40, 3.7), size=17)
    rows = np.flatnonzero(img.pixels.any(axis=1))
    assert rows.tolist() == [8]
    assert img.pixels[8].sum() == 17


def test_every_column_is_single_contiguous_run():
    rng = np.random.default_rng(4)
    for trial in range(20):
        window = rng.standard_normal(int(rng.integers(10, 400)))
        img = rasterize_beat(window, size=32)
        assert img.pixels.shape == (32, 32)
        for j in range(32):
            rows = np.flatnonzero(img.pixels[:, j])
            assert rows.size >= 1
            assert rows.size == rows.max() - rows.min() + 1, f"column {j} not contiguous"


def test_peak_column_is_central():
    # symmetric bump: the single maximum sits at the window center, so the
    # columns reaching the highest trace point must be central within +-1
    n = 251
    t = np.arange(n)
    window = np.exp(-0.5 * ((t - n // 2) / 8.0) ** 2)
    img = rasterize_beat(window, size=112)
    col_tops = np.array([np.flatnonzero(img.pixels[:, j]).min() for j in range(112)])
    peak_cols = np.flatnonzero(col_tops == col_tops.min())
    center = (112 - 1) / 2
    assert any(abs(c - center) <= 1 for c in peak_cols)


def test_scale_invariance():
    rng = np.random.default_rng(12)
    for trial in range(25):
        window = rng.standard_normal(int(rng.integers(20, 300)))
        a = float(rng.uniform(0.1, 50.0))
        b = float(rng.uniform(-20.0, 20.0))
        img1 = rasterize_beat(window, size=24)
        img2 = rasterize_beat(a * window + b, size=24)
        np.testing.assert_array_equal(img1.pixels, img2.pixels)


def test_rasterize_validates_inputs():
    with pytest.raises(ValueError):
        rasterize_beat(np.array([1.0]), size=16)
    with pytest.raises(ValueError):
        rasterize_beat(np.zeros(10), size=4)


# ---------------------------------------------------------------- dataset build


def test_build_dataset_counts_and_order():
    labels = [HeartbeatClass.NORMAL, HeartbeatClass.PVC, HeartbeatClass.APC]
    rec = synthetic_record(n_beats=3, labels=labels, spacing=400)
    ds = build_dataset([rec], PreprocessConfig(image_size=16))
    assert len(ds) == 3
    assert [it.label for it in ds.items] == labels
    assert ds.histogram()[HeartbeatClass.PVC] == 1
    assert all(s == "none" for s in ds.splits)
    assert ds.items[1].source == "synth:1"


def test_build_dataset_two_identical_records():
    rec1 = synthetic_record("r1", n_beats=4, spacing=400, seed=5)
    rec2 = EcgRecord("r2", 360, rec1.signal.copy(), list(rec1.annotations))
    ds = build_dataset([rec1, rec2], PreprocessConfig(image_size=16))
    assert len(ds) == 8
    for i in range(4):
        np.testing.assert_array_equal(ds.items[i].pixels, ds.items[i + 4].pixels)


def test_build_dataset_empty_errors():
    rec = EcgRecord("e", 360, np.zeros(50), [(25, HeartbeatClass.NORMAL)])  # window can't fit
    with pytest.raises(EmptyDatasetError):
        build_dataset([rec], PreprocessConfig(image_size=16))


def test_single_beat_dataset():
    rec = synthetic_record(n_beats=1, spacing=400)
    ds = build_dataset([rec], PreprocessConfig(image_size=16))
    assert len(ds) == 1


# ---------------------------------------------------------------- persistence


def test_save_load_round_trip(tmp_path):
    rec = synthetic_record(n_beats=6, labels=[HeartbeatClass.PVC] * 6, spacing=400)
    ds = build_dataset([rec], PreprocessConfig(image_size=16))
    ds = ds.with_splits(["train", "train", "val", "test", "none", "train"])
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back == ds


def test_round_trip_preserves_histogram(tmp_path):
    labels = [HeartbeatClass.NORMAL] * 5 + [HeartbeatClass.VEB] * 2 + [HeartbeatClass.APC] * 3
    rec = synthetic_record(n_beats=10, labels=labels, spacing=400)
    ds = build_dataset([rec], PreprocessConfig(image_size=16))
    save_dataset(ds, tmp_path / "d")
    assert load_dataset(tmp_path / "d").histogram() == ds.histogram()


def test_save_is_deterministic(tmp_path):
    rec = synthetic_record(n_beats=4, spacing=400)
    ds = build_dataset([rec], PreprocessConfig(image_size=16))
    save_dataset(ds, tmp_path / "a")
    save_dataset(ds, tmp_path / "b")
    for name in ["manifest.json", "beat_000000.pgm", "beat_000003.pgm"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_corrupt_pixel_file_names_item(tmp_path):
    rec = synthetic_record(n_beats=3, spacing=400)
    ds = build_dataset([rec], PreprocessConfig(image_size=16))
    save_dataset(ds, tmp_path / "d")
    target = tmp_path / "d" / "beat_000001.pgm"
    raw = bytearray(target.read_bytes())
    raw[-5] = 7  # neither 0 nor 255
    target.write_bytes(bytes(raw))
    with pytest.raises(IntegrityError, match="item 1"):
        load_dataset(tmp_path / "d")


def test_missing_pixel_file(tmp_path):
    rec = synthetic_record(n_beats=3, spacing=400)
    save_dataset(build_dataset([rec], PreprocessConfig(image_size=16)), tmp_path / "d")
    (tmp_path / "d" / "beat_000002.pgm").unlink()
    with pytest.raises(IntegrityError, match="item 2"):
        load_dataset(tmp_path / "d")


# ---------------------------------------------------------------- invariants


def test_beat_image_must_be_binary():
    with pytest.raises(ValueError):
        BeatImage(pixels=np.full((4, 4), 3, dtype=np.uint8), label=HeartbeatClass.NORMAL, source="x")


def test_synthetic_items_never_in_eval_splits():
    synth = tiny_image(HeartbeatClass.VEB, provenance="smote")
    with pytest.raises(ValueError, match="synthetic"):
        BeatDataset([synth], ["test"])
    with pytest.raises(ValueError, match="synthetic"):
        BeatDataset([synth], ["val"])
    BeatDataset([synth], ["train"])  # fine
