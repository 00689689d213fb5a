import numpy as np
import pytest

from beatbalance.errors import EmptyRecordError, ParseError
from beatbalance.ingest import (
    CLASS_ORDER,
    EcgRecord,
    HeartbeatClass,
    SYMBOL_TABLE,
    class_histogram,
    load_record,
    save_record,
)

from conftest import synthetic_record


def write_pair(tmp_path, signal_rows, ann_rows, stem="rec"):
    sig = tmp_path / f"{stem}.signal.csv"
    ann = tmp_path / f"{stem}.annotations.csv"
    sig.write_text("sample_index,amplitude_mv\n" + "".join(f"{i},{v}\n" for i, v in signal_rows))
    ann.write_text("sample_index,symbol\n" + "".join(f"{i},{s}\n" for i, s in ann_rows))
    return sig, ann


def test_minimal_record(tmp_path):
    sig, ann = write_pair(tmp_path, [(i, 0.1 * i) for i in range(10)], [(5, "N")])
    rec = load_record(sig, ann)
    assert rec.annotations == [(5, HeartbeatClass.NORMAL)]
    assert rec.signal.shape == (10,)
    assert rec.sampling_rate == 360


def test_annotation_out_of_range(tmp_path):
    sig, ann = write_pair(tmp_path, [(i, 0.0) for i in range(10)], [(12, "N")])
    with pytest.raises(ParseError, match="outside signal"):
        load_record(sig, ann)


def test_unknown_symbols_dropped(tmp_path, caplog):
    sig, ann = write_pair(tmp_path, [(i, 0.0) for i in range(10)], [(2, "N"), (4, "+"), (6, "Q"), (8, "V")])
    with caplog.at_level("INFO"):
        rec = load_record(sig, ann)
    assert [l for _, l in rec.annotations] == [HeartbeatClass.NORMAL, HeartbeatClass.PVC]
    assert "skipped 2" in caplog.text


def test_no_usable_annotations(tmp_path):
    sig, ann = write_pair(tmp_path, [(i, 0.0) for i in range(10)], [(4, "?")])
    with pytest.raises(EmptyRecordError):
        load_record(sig, ann)


def test_malformed_row_names_file_and_line(tmp_path):
    sig, ann = write_pair(tmp_path, [(0, 0.0), (1, "bogus")], [(0, "N")])
    with pytest.raises(ParseError) as err:
        load_record(sig, ann)
    assert err.value.line_no == 3
    assert "signal" in err.value.path


def test_bad_header_rejected(tmp_path):
    sig = tmp_path / "s.csv"
    sig.write_text("index,mv\n0,0.0\n")
    ann = tmp_path / "a.csv"
    ann.write_text("sample_index,symbol\n0,N\n")
    with pytest.raises(ParseError, match="header"):
        load_record(sig, ann)


def test_non_monotone_annotations_rejected(tmp_path):
    sig, ann = write_pair(tmp_path, [(i, 0.0) for i in range(10)], [(5, "N"), (3, "N")])
    with pytest.raises(ParseError, match="strictly increasing"):
        load_record(sig, ann)


def test_round_trip_is_lossless(tmp_path):
    rec = synthetic_record(
        n_beats=9,
        labels=[SYMBOL_TABLE[s] for s in "NLVAR/ENV"],
        seed=3,
    )
    sig = tmp_path / "out.signal.csv"
    ann = tmp_path / "out.annotations.csv"
    save_record(rec, sig, ann)
    back = load_record(sig, ann, record_id=rec.record_id)
    assert back == rec


def test_round_trip_many_random_records(tmp_path):
    # seeded property loop: save -> load is the identity on valid records
    rng = np.random.default_rng(17)
    symbols = list(SYMBOL_TABLE)
    for trial in range(10):
        n = int(rng.integers(1, 12))
        labels = [SYMBOL_TABLE[symbols[int(rng.integers(len(symbols)))]] for _ in range(n)]
        rec = synthetic_record(record_id=f"r{trial}", n_beats=n, labels=labels, seed=100 + trial)
        sig = tmp_path / f"{trial}.signal.csv"
        ann = tmp_path / f"{trial}.annotations.csv"
        save_record(rec, sig, ann)
        assert load_record(sig, ann, record_id=rec.record_id) == rec


def test_histogram_single_class():
    rec = synthetic_record(n_beats=3)
    hist = class_histogram([rec])
    assert hist[HeartbeatClass.NORMAL] == 3
    assert sum(hist.values()) == 3
    assert all(hist[c] == 0 for c in CLASS_ORDER if c != HeartbeatClass.NORMAL)


def test_histogram_totals_match_annotations():
    labels = [HeartbeatClass.APC] * 4 + [HeartbeatClass.VEB] * 2 + [HeartbeatClass.NORMAL] * 5
    recs = [
        synthetic_record("a", n_beats=6, labels=labels[:6], seed=1),
        synthetic_record("b", n_beats=5, labels=labels[6:], seed=2),
    ]
    hist = class_histogram(recs)
    total = sum(len(r.annotations) for r in recs)
    assert sum(hist.values()) == total
    assert hist[HeartbeatClass.APC] == 4
    assert hist[HeartbeatClass.VEB] == 2


def test_histogram_rejects_empty():
    with pytest.raises(EmptyRecordError):
        class_histogram([])


def test_record_invariants():
    with pytest.raises(ValueError):
        EcgRecord("x", 360, np.array([]), [])
    with pytest.raises(ValueError):
        EcgRecord("x", 0, np.zeros(5), [])
    with pytest.raises(ValueError):
        EcgRecord("x", 360, np.zeros(5), [(7, HeartbeatClass.NORMAL)])
    with pytest.raises(ValueError):
        EcgRecord("x", 360, np.zeros(5), [(3, HeartbeatClass.NORMAL), (3, HeartbeatClass.PVC)])
