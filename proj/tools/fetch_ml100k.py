#!/usr/bin/env python3
"""Fetch MovieLens-100K ratings into data/ml-100k/u.data.

Tries the GroupLens archive first. Without direct internet access it falls back
to the copy bundled in the recbole wheel (same 100000 ratings, plus a header).
"""
import argparse
import hashlib
import io
import pathlib
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

GROUPLENS = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
MD5 = "6e47046882bad158b0efbb84cd5cb987"


def from_grouplens():
    with urllib.request.urlopen(GROUPLENS, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def from_recbole():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "recbole==1.2.1", "--no-deps",
                        "-d", tmp, "-q"], check=True)
        wheel = next(pathlib.Path(tmp).glob("recbole-*.whl"))
        text = zipfile.ZipFile(wheel).read("recbole/dataset_example/ml-100k/ml-100k.inter")
    lines = text.decode().splitlines()[1:]  # drop the typed header
    return ("\n".join(lines) + "\n").encode()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/ml-100k/u.data")
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    try:
        data = from_grouplens()
    except OSError as err:
        print(f"grouplens download failed ({err}); using the recbole wheel", file=sys.stderr)
        data = from_recbole()
    digest = hashlib.md5(data).hexdigest()
    if digest != MD5:
        print(f"warning: md5 {digest} differs from the expected {MD5}", file=sys.stderr)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    ratings = data.count(b"\n")
    print(f"wrote {out} ({ratings} ratings)")


if __name__ == "__main__":
    main()
