#!/usr/bin/env python3
"""Build facts/train/valid/test split directories for UMLS and Kinships.

The triples come from the dataset files bundled in the pykeen wheel. Those ship only
train/valid/test, so the original train split is partitioned 3:1 into facts and train
with a fixed seed. valid and test are copied unchanged.
"""

import argparse
import random
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

DATASETS = ("umls", "kinships")
WHEEL_SPEC = "pykeen==1.11.1"


def find_wheel(explicit: str | None, workdir: Path) -> Path:
    if explicit:
        return Path(explicit)
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
         "-d", str(workdir), WHEEL_SPEC],
        check=True,
    )
    wheels = sorted(workdir.glob("pykeen-*.whl"))
    if not wheels:
        sys.exit("pip download produced no pykeen wheel")
    return wheels[0]


def read_lines(zf: zipfile.ZipFile, name: str) -> list[str]:
    text = zf.read(name).decode("utf-8")
    return [line for line in text.splitlines() if line.strip()]


def write_lines(path: Path, lines: list[str]) -> None:
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def build(zf: zipfile.ZipFile, dataset: str, out: Path, seed: int, facts_share: float) -> None:
    base = f"pykeen/datasets/{dataset}"
    train = read_lines(zf, f"{base}/train.txt")
    rng = random.Random(f"{seed}:{dataset}")
    order = list(range(len(train)))
    rng.shuffle(order)
    n_facts = round(len(train) * facts_share)
    facts_idx = set(order[:n_facts])
    target = out / dataset
    target.mkdir(parents=True, exist_ok=True)
    write_lines(target / "facts.txt", [t for i, t in enumerate(train) if i in facts_idx])
    write_lines(target / "train.txt", [t for i, t in enumerate(train) if i not in facts_idx])
    for split in ("valid", "test"):
        write_lines(target / f"{split}.txt", read_lines(zf, f"{base}/{split}.txt"))
    print(f"{dataset}: facts={n_facts} train={len(train) - n_facts} -> {target}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data", help="output root (one subdirectory per dataset)")
    ap.add_argument("--wheel", help="path to an already downloaded pykeen wheel")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--facts-share", type=float, default=0.75)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = find_wheel(args.wheel, Path(tmp))
        with zipfile.ZipFile(wheel) as zf:
            for ds in DATASETS:
                build(zf, ds, Path(args.out), args.seed, args.facts_share)


if __name__ == "__main__":
    main()
