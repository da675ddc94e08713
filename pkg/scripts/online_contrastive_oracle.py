#!/usr/bin/env python3
"""Independent scalar evaluation of the online contrastive loss.

One positive pair at cosine distance 0.6 and one negative pair at 0.2 with
margin 0.5: both pairs are hard, so the loss is 0.6^2 + (0.5 - 0.2)^2.
Computed here from raw coordinates with plain arithmetic. Prints the loss
to 17 significant digits.
"""

import math

MARGIN = 0.5

# (left vector, right vector, label); unit vectors chosen so the positive
# pair sits at distance 0.6 and the negative pair at distance 0.2.
PAIRS = [
    ((1.0, 0.0), (0.4, math.sqrt(1.0 - 0.4 ** 2)), 1),
    ((1.0, 0.0), (0.8, 0.6), 0),
]


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1]


def main():
    distances = [1.0 - dot(l, r) for l, r, _ in PAIRS]
    labels = [lab for _, _, lab in PAIRS]
    pos_d = [d for d, lab in zip(distances, labels) if lab == 1]
    neg_d = [d for d, lab in zip(distances, labels) if lab == 0]
    hard_pos = [d for d in pos_d if d > min(neg_d)] if neg_d else []
    hard_neg = [d for d in neg_d if d < max(pos_d)] if pos_d else []
    loss = sum(d * d for d in hard_pos)
    loss += sum(max(0.0, MARGIN - d) ** 2 for d in hard_neg)
    print(f"{loss:.17g}")


if __name__ == "__main__":
    main()
