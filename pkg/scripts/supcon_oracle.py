#!/usr/bin/env python3
"""Independent scalar evaluation of the supervised contrastive loss.

Recomputes the fixed 4-point batch used by the test suite with nothing but
the math module, term by term, as a cross-check on the vectorized
implementation. Prints the loss to 17 significant digits.
"""

import math

# Unit vectors in the plane, two classes.
POINTS = [
    ((1.0, 0.0), 0),
    ((0.6, 0.8), 0),
    ((0.0, 1.0), 1),
    ((-0.8, 0.6), 1),
]
TEMPERATURE = 0.2


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1]


def main():
    n = len(POINTS)
    anchor_terms = []
    for i in range(n):
        z_i, label_i = POINTS[i]
        positives = [j for j in range(n) if j != i and POINTS[j][1] == label_i]
        if not positives:
            continue
        denominator = sum(
            math.exp(dot(z_i, POINTS[a][0]) / TEMPERATURE) for a in range(n) if a != i
        )
        total = 0.0
        for p in positives:
            numerator = math.exp(dot(z_i, POINTS[p][0]) / TEMPERATURE)
            total += -math.log(numerator / denominator)
        anchor_terms.append(total / len(positives))
    loss = sum(anchor_terms) / len(anchor_terms)
    print(f"{loss:.17g}")


if __name__ == "__main__":
    main()
