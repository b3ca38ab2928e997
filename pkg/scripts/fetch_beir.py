#!/usr/bin/env python3
"""Fetch BEIR-format evaluation datasets (MTEB variants) from Hugging Face.

Downloads corpus.jsonl, queries.jsonl, and qrels/test.tsv for each
requested dataset into data/<name>/, which is where the reproduction
tests look by default ($BMX_BEIR_DATA overrides).

Usage:
    python scripts/fetch_beir.py                 # scifact + nfcorpus
    python scripts/fetch_beir.py scifact scidocs
    HF_BASE_URL=https://my-mirror/huggingface python scripts/fetch_beir.py
"""

from __future__ import annotations

import os
import sys

import requests

DEFAULT_DATASETS = ["scifact", "nfcorpus"]
FILES = ["corpus.jsonl", "queries.jsonl", "qrels/test.tsv"]
BASE_URL = os.environ.get("HF_BASE_URL", "https://huggingface.co")
REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.environ.get("BMX_BEIR_DATA", os.path.join(REPO_ROOT, "data"))


def fetch(dataset: str) -> None:
    for rel in FILES:
        url = f"{BASE_URL}/datasets/mteb/{dataset}/resolve/main/{rel}"
        target = os.path.join(DATA_DIR, dataset, rel)
        os.makedirs(os.path.dirname(target), exist_ok=True)
        if os.path.exists(target):
            print(f"  {target} already present, skipping")
            continue
        print(f"  {url}")
        response = requests.get(url, timeout=300)
        response.raise_for_status()
        with open(target, "wb") as fh:
            fh.write(response.content)
        print(f"  -> {target} ({len(response.content)} bytes)")


def main() -> int:
    datasets = sys.argv[1:] or DEFAULT_DATASETS
    for dataset in datasets:
        print(f"fetching {dataset} ...")
        fetch(dataset)
    return 0


if __name__ == "__main__":
    sys.exit(main())
