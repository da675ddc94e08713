#!/usr/bin/env python3
"""Generate the synthetic firm-alias benchmark committed under data/.

200 invented firms, each with a canonical name "<Stem> <Industry> <Legal>"
and 3 perturbed aliases (word abbreviations, token drops, token swaps, and
character noise on the stem). Entities are split 140/20/40 into
train/val/test at the entity level, so evaluation entities are never seen
in training. Regenerating with the fixed seed reproduces the committed
files byte for byte.

Outputs (relative to the repo root):
  data/alias_train.csv        cluster_id,text   (train entities: canonical + aliases)
  data/alias_val.csv          cluster_id,text   (val entities: canonical + aliases)
  data/alias_test_queries.csv text,entity       (test-entity aliases)
  data/alias_test_keys.csv    text,entity       (all 200 canonical names)
  data/alias_gold.csv         query,key         (query row id -> gold key row id)
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np

SEED = 20240811
N_ENTITIES = 200
N_ALIASES = 3
N_TRAIN, N_VAL, N_TEST = 140, 20, 40

SYLLABLE_A = [
    "Var", "Kel", "Nor", "Tam", "Bel", "Rud", "Mar", "Sol", "Hal", "Zen",
    "Gar", "Fen", "Lor", "Dex", "Pol", "Quin", "Rav", "Sten", "Tor", "Ulm",
    "Ven", "Wex", "Yar", "Bram", "Crest", "Dorn", "Elm", "Fal", "Gris", "Holt",
]
SYLLABLE_B = ["an", "or", "el", "in", "ar", "ul", "em", "os", "ik", "ur", "al", "en"]

# Few distinct trade/legal words, so many firms share them: shared-word
# character overlap pulls wrong candidates and has to be learned away.
INDUSTRY = {
    "Manufacturing": "Mfg.", "Engineering": "Engnrg.", "International": "Intl.",
    "Industrial": "Indl.", "Commercial": "Cmrcl.", "Development": "Devlpmt.",
    "Distribution": "Dstrbtn.", "Construction": "Cnstrctn.",
}
LEGAL = {
    "Corporation": "Corp.", "Incorporated": "Inc.", "Limited": "Ltd.",
    "Holdings": "Hldgs.", "Company": "Co.", "Partners": "Ptnrs.",
}


def make_stems(rng: np.random.Generator, count: int) -> list[str]:
    stems: list[str] = []
    seen: set[str] = set()
    while len(stems) < count:
        stem = (
            SYLLABLE_A[rng.integers(len(SYLLABLE_A))]
            + SYLLABLE_B[rng.integers(len(SYLLABLE_B))]
            + SYLLABLE_B[rng.integers(len(SYLLABLE_B))]
        )
        if stem not in seen:
            seen.add(stem)
            stems.append(stem)
    return stems


def noisy_stem(stem: str, rng: np.random.Generator) -> str:
    """One character-level edit: adjacent swap, deletion, or substitution."""
    chars = list(stem)
    op = rng.integers(3)
    pos = int(rng.integers(1, len(chars) - 1))
    if op == 0:
        chars[pos], chars[pos + 1] = chars[pos + 1], chars[pos]
    elif op == 1:
        del chars[pos]
    else:
        chars[pos] = "abcdefghijklmnopqrstuvwxyz"[rng.integers(26)]
    return "".join(chars)


def make_alias(stem: str, industry: str, legal: str, rng: np.random.Generator) -> str:
    stem_out = noisy_stem(stem, rng) if rng.random() < 0.6 else stem
    industry_out: str | None = INDUSTRY[industry] if rng.random() < 0.65 else industry
    legal_out: str | None = LEGAL[legal] if rng.random() < 0.75 else legal
    drop = rng.random()
    if drop < 0.30:
        industry_out = None
    elif drop < 0.60:
        legal_out = None
    tokens = [t for t in (stem_out, industry_out, legal_out) if t]
    if len(tokens) > 1 and rng.random() < 0.5:
        order = rng.permutation(len(tokens))
        tokens = [tokens[i] for i in order]
    return " ".join(tokens)


def build(root: Path) -> None:
    rng = np.random.default_rng(SEED)
    stems = make_stems(rng, N_ENTITIES)
    industries = list(INDUSTRY)
    legals = list(LEGAL)

    entities = []
    for stem in stems:
        industry = industries[rng.integers(len(industries))]
        legal = legals[rng.integers(len(legals))]
        canonical = f"{stem} {industry} {legal}"
        aliases: list[str] = []
        while len(aliases) < N_ALIASES:
            alias = make_alias(stem, industry, legal, rng)
            if alias != canonical and alias not in aliases:
                aliases.append(alias)
        entities.append({"canonical": canonical, "aliases": aliases})

    order = rng.permutation(N_ENTITIES)
    split = {
        "train": [entities[i] for i in order[:N_TRAIN]],
        "val": [entities[i] for i in order[N_TRAIN:N_TRAIN + N_VAL]],
        "test": [entities[i] for i in order[N_TRAIN + N_VAL:]],
    }

    data = root / "data"
    data.mkdir(exist_ok=True)

    for name in ("train", "val"):
        with open(data / f"alias_{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cluster_id", "text"])
            for n, entity in enumerate(split[name]):
                writer.writerow([f"{name}{n}", entity["canonical"]])
                for alias in entity["aliases"]:
                    writer.writerow([f"{name}{n}", alias])

    canonical_row = {e["canonical"]: i for i, e in enumerate(entities)}
    with open(data / "alias_test_keys.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["text", "entity"])
        for i, entity in enumerate(entities):
            writer.writerow([entity["canonical"], f"e{i}"])

    with open(data / "alias_test_queries.csv", "w", newline="", encoding="utf-8") as fh, \
            open(data / "alias_gold.csv", "w", newline="", encoding="utf-8") as gh:
        qwriter = csv.writer(fh)
        gwriter = csv.writer(gh)
        qwriter.writerow(["text", "entity"])
        gwriter.writerow(["query", "key"])
        row = 0
        for entity in split["test"]:
            key_row = canonical_row[entity["canonical"]]
            for alias in entity["aliases"]:
                qwriter.writerow([alias, f"e{key_row}"])
                gwriter.writerow([row, key_row])
                row += 1

    sizes = {name: len(rows) for name, rows in split.items()}
    print(f"wrote alias benchmark under {data}: entities per split {sizes}")


if __name__ == "__main__":
    build(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent)
