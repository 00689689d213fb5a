"""Regenerate the bundled sample record pair under data/sample/.

The sample is a synthetic ECG-like signal (Gaussian R-peaks on a drifting
baseline) annotated with a fixed mix of the seven beat classes. Rerunning
this script reproduces the checked-in files byte for byte.
"""

from pathlib import Path

from beatbalance.sampledata import write_sample_pair

if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "data" / "sample"
    sig, ann = write_sample_pair(out, record_id="sample01", n_beats=36, seed=11)
    print(f"wrote {sig}")
    print(f"wrote {ann}")
