"""From an annotated ECG record to binary beat images.

Loads the bundled sample record, cuts one window per annotated beat (25
time-slices of 10 samples, centered on the peak), rasterizes each window
into a 112x112 binary image, and persists the result as a dataset
directory. Prints the class histogram and an ASCII thumbnail of one beat.
"""

from pathlib import Path

import numpy as np

from beatbalance import build_dataset, load_record, save_dataset
from beatbalance.preprocess import PreprocessConfig

HERE = Path(__file__).resolve().parent
DATA = HERE.parent / "data" / "sample"
OUT = HERE / "output" / "beats"


def ascii_thumbnail(pixels, cols=56):
    step = max(1, pixels.shape[0] // 28)
    for row in pixels[::step, :: max(1, pixels.shape[1] // cols)]:
        print("".join(".#"[v] for v in row))


def main():
    record = load_record(DATA / "sample01.signal.csv", DATA / "sample01.annotations.csv")
    print(f"record {record.record_id}: {record.signal.size} samples at {record.sampling_rate} Hz, "
          f"{len(record.annotations)} annotated beats")

    dataset = build_dataset([record], PreprocessConfig())
    print("\nclass histogram:")
    for cls, count in dataset.histogram().items():
        if count:
            print(f"  {cls.value:>7s}: {count}")

    manifest = save_dataset(dataset, OUT)
    print(f"\nsaved {len(dataset)} beat images -> {manifest}")

    item = dataset.items[0]
    print(f"\nfirst beat ({item.label.value}, source {item.source}):")
    ascii_thumbnail(item.pixels)

    widths = np.array([img.pixels.sum(axis=0).max() for img in dataset.items])
    print(f"\ntrace thickness: max column run {widths.max()}, mean {widths.mean():.1f}")


if __name__ == "__main__":
    main()
