#!/usr/bin/env python3
"""Generate the planted-partition deduplication fixture under data/.

50 invented firms, each appearing 3 times with light near-duplicate noise
(character swaps/edits and abbreviated legal forms). Every firm gets a
unique (material, legal form) combination so near-duplicates stay far more
similar than any cross-firm pair; the planted partition is the ground
truth a dedup run should recover.

Outputs:
  data/dedup_planted.csv  name            (150 rows, shuffled)
  data/dedup_gold.csv     row,entity      (row id -> planted entity id)
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np

SEED = 4157
N_ENTITIES = 50
N_VARIANTS = 3

SYLLABLE_A = ["Arden", "Brisk", "Corv", "Dunm", "Elvik", "Fresn", "Gald", "Hexl",
              "Ivor", "Jasp", "Kov", "Lum", "Mirr", "Nobl", "Ostr", "Pell",
              "Quarr", "Riv", "Sand", "Tell", "Umb", "Vint", "Welk", "Xant", "Yarr", "Zeph"]
SYLLABLE_B = ["an", "or", "el", "in", "ar", "ul", "em", "os", "ik", "ur"]
MATERIAL = ["Metal", "Grain", "Cotton", "Coal", "Silk", "Copper", "Marble",
            "Amber", "Cedar", "Salt", "Iron", "Wool", "Timber"]
LEGAL = {"Corporation": "Corp.", "Limited": "Ltd.", "Incorporated": "Inc.",
         "Holdings": "Hldgs."}


def char_edit(text: str, rng: np.random.Generator) -> str:
    chars = list(text)
    pos = int(rng.integers(1, len(chars) - 1))
    op = rng.integers(3)
    if op == 0 and chars[pos + 1] != " " and chars[pos] != " ":
        chars[pos], chars[pos + 1] = chars[pos + 1], chars[pos]
    elif op == 1 and chars[pos] != " ":
        del chars[pos]
    else:
        chars[pos] = "abcdefghijklmnopqrstuvwxyz"[rng.integers(26)]
    return "".join(chars)


def variant(base: str, legal: str, rng: np.random.Generator) -> str:
    roll = rng.random()
    if roll < 0.5:
        return char_edit(f"{base} {legal}", rng)
    if roll < 0.8:
        return f"{base} {LEGAL[legal]}"
    return char_edit(char_edit(f"{base} {legal}", rng), rng)


def build(root: Path) -> None:
    rng = np.random.default_rng(SEED)
    stems: list[str] = []
    seen: set[str] = set()
    while len(stems) < N_ENTITIES:
        stem = (SYLLABLE_A[rng.integers(len(SYLLABLE_A))]
                + SYLLABLE_B[rng.integers(len(SYLLABLE_B))]
                + SYLLABLE_B[rng.integers(len(SYLLABLE_B))])
        if stem not in seen:
            seen.add(stem)
            stems.append(stem)
    # unique (material, legal) pairs keep cross-firm similarity down
    combos = [(m, l) for m in MATERIAL for l in LEGAL]
    picks = rng.choice(len(combos), size=N_ENTITIES, replace=False)

    rows: list[tuple[str, int]] = []
    for entity, (stem, pick) in enumerate(zip(stems, picks)):
        material, legal = combos[int(pick)]
        base = f"{stem} {material}"
        texts = {f"{base} {legal}"}
        while len(texts) < N_VARIANTS:
            texts.add(variant(base, legal, rng))
        for text in sorted(texts):
            rows.append((text, entity))

    order = rng.permutation(len(rows))
    data = root / "data"
    data.mkdir(exist_ok=True)
    with open(data / "dedup_planted.csv", "w", newline="", encoding="utf-8") as fh, \
            open(data / "dedup_gold.csv", "w", newline="", encoding="utf-8") as gh:
        writer = csv.writer(fh)
        gwriter = csv.writer(gh)
        writer.writerow(["name"])
        gwriter.writerow(["row", "entity"])
        for row_id, idx in enumerate(order):
            text, entity = rows[int(idx)]
            writer.writerow([text])
            gwriter.writerow([row_id, entity])
    print(f"wrote dedup fixture under {data}: {len(rows)} rows, {N_ENTITIES} planted clusters")


if __name__ == "__main__":
    build(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent)
