#!/usr/bin/env python3
"""Convert the 5000-image MNIST CSV subset shipped in the mlxtend wheel into
gzip-compressed IDX files, and cut the 10-image test fixture.

Usage: make_mnist_subset.py MLXTEND_WHEEL OUT_DIR [FIXTURE_DIR]
"""
import csv
import gzip
import io
import struct
import sys
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(wheel):
    with zipfile.ZipFile(wheel) as zf:
        raw = gzip.decompress(zf.read(MEMBER)).decode("ascii")
    rows = [list(map(int, r)) for r in csv.reader(io.StringIO(raw)) if r]
    for r in rows:
        if len(r) != 785:
            raise SystemExit(f"unexpected row width {len(r)}")
    return rows


def idx_images(rows):
    head = struct.pack(">IIII", 0x00000803, len(rows), 28, 28)
    return head + bytes(v for r in rows for v in r[:784])


def idx_labels(rows):
    return struct.pack(">II", 0x00000801, len(rows)) + bytes(r[784] for r in rows)


def main(argv):
    if len(argv) < 3:
        raise SystemExit(__doc__)
    rows = read_rows(argv[1])
    out = argv[2]
    with gzip.GzipFile(f"{out}/images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(idx_images(rows))
    with gzip.GzipFile(f"{out}/labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(idx_labels(rows))
    if len(argv) > 3:
        with open(f"{argv[3]}/mnist10-images-idx3-ubyte", "wb") as f:
            f.write(idx_images(rows[:10]))
        with open(f"{argv[3]}/mnist10-labels-idx1-ubyte", "wb") as f:
            f.write(idx_labels(rows[:10]))
    print(f"wrote {len(rows)} images")


if __name__ == "__main__":
    main(sys.argv)
