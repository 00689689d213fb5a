"""Load annotated single-channel ECG recordings from CSV exports.

The canonical input is a two-file export of one MIT-BIH channel (MLII by
convention): a signal CSV (``sample_index,amplitude_mv``) and an annotation
CSV (``sample_index,symbol``). Annotation symbols are mapped onto the seven
beat classes through an explicit, versioned symbol table; rows with other
beat symbols are skipped and counted.
"""

import csv
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyRecordError, ParseError

log = logging.getLogger(__name__)

MITBIH_SAMPLING_RATE = 360


class HeartbeatClass(enum.Enum):
    """The seven beat diagnoses handled by this package."""

    APC = "APC"
    NORMAL = "Normal"
    LBBB = "LBBB"
    PAB = "PAB"
    PVC = "PVC"
    RBB = "RBB"
    VEB = "VEB"

    def __str__(self):
        return self.value


#: Fixed class order used everywhere an integer class index is needed.
CLASS_ORDER = (
    HeartbeatClass.APC,
    HeartbeatClass.NORMAL,
    HeartbeatClass.LBBB,
    HeartbeatClass.PAB,
    HeartbeatClass.PVC,
    HeartbeatClass.RBB,
    HeartbeatClass.VEB,
)

CLASS_INDEX = {c: i for i, c in enumerate(CLASS_ORDER)}
NUM_CLASSES = len(CLASS_ORDER)

#: MIT-BIH annotation symbol -> beat class. Any symbol missing here is
#: skipped at ingestion. Bump the version whenever an entry changes.
SYMBOL_TABLE_VERSION = 1
SYMBOL_TABLE = {
    "A": HeartbeatClass.APC,  # atrial premature contraction
    "N": HeartbeatClass.NORMAL,
    "L": HeartbeatClass.LBBB,  # left bundle branch block
    "/": HeartbeatClass.PAB,  # paced beat
    "V": HeartbeatClass.PVC,  # premature ventricular contraction
    "R": HeartbeatClass.RBB,  # right bundle branch block
    "E": HeartbeatClass.VEB,  # ventricular escape beat
}


def class_by_name(name):
    """Resolve a class from its display name ('APC', 'Normal', ...)."""
    for c in CLASS_ORDER:
        if c.value == name:
            return c
    raise KeyError(f"unknown heartbeat class {name!r}")


@dataclass(frozen=True)
class EcgRecord:
    """One annotated ECG channel.

    ``annotations`` is an ordered list of ``(sample_index, HeartbeatClass)``
    pairs, strictly increasing in sample index, each index inside the signal.
    """

    record_id: str
    sampling_rate: int
    signal: np.ndarray
    annotations: list = field(default_factory=list)

    def __post_init__(self):
        sig = np.asarray(self.signal, dtype=np.float64)
        object.__setattr__(self, "signal", sig)
        if self.sampling_rate <= 0:
            raise ValueError(f"sampling_rate must be positive, got {self.sampling_rate}")
        if sig.ndim != 1 or sig.size == 0:
            raise ValueError("signal must be a nonempty 1-D sequence")
        prev = -1
        for idx, label in self.annotations:
            if not 0 <= idx < sig.size:
                raise ValueError(f"annotation index {idx} outside signal of length {sig.size}")
            if idx <= prev:
                raise ValueError(f"annotation indices not strictly increasing at {idx}")
            if not isinstance(label, HeartbeatClass):
                raise ValueError(f"annotation label {label!r} is not a HeartbeatClass")
            prev = idx

    def __eq__(self, other):
        if not isinstance(other, EcgRecord):
            return NotImplemented
        return (
            self.record_id == other.record_id
            and self.sampling_rate == other.sampling_rate
            and np.array_equal(self.signal, other.signal)
            and self.annotations == other.annotations
        )


def _read_rows(path, expected_header):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise ParseError(path, 1, f"expected header {','.join(expected_header)!r}, got {','.join(header)!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ParseError(path, line_no, f"expected 2 columns, got {len(row)}")
            yield line_no, row


def load_record(signal_path, annotation_path, record_id=None, sampling_rate=MITBIH_SAMPLING_RATE):
    """Load one record from a signal CSV and an annotation CSV.

    Annotation symbols outside the seven-class table are dropped and the
    dropped count is logged. Raises :class:`ParseError` for malformed rows
    and :class:`EmptyRecordError` when no usable annotation remains.
    """
    signal_path = Path(signal_path)
    annotation_path = Path(annotation_path)
    if record_id is None:
        record_id = signal_path.name.split(".")[0]

    samples = []
    for line_no, (idx_s, amp_s) in _read_rows(signal_path, ["sample_index", "amplitude_mv"]):
        try:
            idx = int(idx_s)
            amp = float(amp_s)
        except ValueError:
            raise ParseError(signal_path, line_no, f"malformed row {idx_s!r},{amp_s!r}") from None
        if idx != len(samples):
            raise ParseError(signal_path, line_no, f"sample_index {idx} out of sequence (expected {len(samples)})")
        samples.append(amp)
    if not samples:
        raise ParseError(signal_path, 1, "signal file has no samples")
    signal = np.asarray(samples, dtype=np.float64)

    annotations = []
    skipped = 0
    prev_idx = -1
    for line_no, (idx_s, symbol) in _read_rows(annotation_path, ["sample_index", "symbol"]):
        try:
            idx = int(idx_s)
        except ValueError:
            raise ParseError(annotation_path, line_no, f"malformed sample_index {idx_s!r}") from None
        if not 0 <= idx < signal.size:
            raise ParseError(annotation_path, line_no, f"annotation index {idx} outside signal of length {signal.size}")
        if idx <= prev_idx:
            raise ParseError(annotation_path, line_no, f"annotation index {idx} not strictly increasing")
        prev_idx = idx
        label = SYMBOL_TABLE.get(symbol.strip())
        if label is None:
            skipped += 1
            continue
        annotations.append((idx, label))

    if skipped:
        log.info("%s: skipped %d annotations with symbols outside the class table", record_id, skipped)
    if not annotations:
        raise EmptyRecordError(f"{record_id}: no usable annotations after symbol filtering")
    return EcgRecord(record_id=record_id, sampling_rate=sampling_rate, signal=signal, annotations=annotations)


def save_record(record, signal_path, annotation_path):
    """Write a record back to the two-file CSV format (inverse of load)."""
    _CLASS_TO_SYMBOL = {label: sym for sym, label in SYMBOL_TABLE.items()}
    with open(signal_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample_index,amplitude_mv\n")
        for i, v in enumerate(record.signal):
            fh.write(f"{i},{float(v)!r}\n")
    with open(annotation_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample_index,symbol\n")
        for idx, label in record.annotations:
            fh.write(f"{idx},{_CLASS_TO_SYMBOL[label]}\n")


def class_histogram(records):
    """Count annotations per class over a nonempty list of records."""
    if not records:
        raise EmptyRecordError("class_histogram needs at least one record")
    counts = {c: 0 for c in CLASS_ORDER}
    total = 0
    for rec in records:
        for _, label in rec.annotations:
            counts[label] += 1
            total += 1
    if total == 0:
        raise EmptyRecordError("records contain no annotations")
    return counts
