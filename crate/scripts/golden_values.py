#!/usr/bin/env python3
"""Independent scalar reference values for the loss, diversity and metric tests.

Uses only the Python standard library so the numbers do not share any code
path with the Rust implementation. Run: python3 scripts/golden_values.py
"""
import itertools
import math


def softmax(xs, t=1.0):
    m = max(xs)
    e = [math.exp((x - m) / t) for x in xs]
    s = sum(e)
    return [v / s for v in e]


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def dcl_direction(S, div, mu, gamma):
    n = len(S)
    total = 0.0
    for i in range(n):
        neg = sum(math.exp((S[i][j] - gamma) / (mu * div[i])) for j in range(len(S[i])) if j != i)
        total += math.log(neg + 1.0) - math.log(S[i][i] + 1.0)
    return mu / n * total


def transpose(S):
    return [list(r) for r in zip(*S)]


def dcl(S, div_f, div_b, mu, gamma):
    return dcl_direction(S, div_f, mu, gamma) + dcl_direction(transpose(S), div_b, mu, gamma)


def pre_div_std(negatives, eps):
    mean = sum(negatives) / len(negatives)
    sd = math.sqrt(sum((x - mean) ** 2 for x in negatives) / len(negatives))
    return 1.0 if sd == 0 else 1.0 / sigmoid(eps / sd)


def entropy_bits(negatives):
    p = softmax(negatives)
    return p, -sum(q * math.log2(q) for q in p)


def kmeans_1d_brute(points, k=2):
    best = None
    for labels in itertools.product(range(k), repeat=len(points)):
        if len(set(labels)) < k:
            continue
        cents = [sum(p for p, l in zip(points, labels) if l == c) / labels.count(c) for c in range(k)]
        inertia = sum((p - cents[l]) ** 2 for p, l in zip(points, labels))
        if best is None or inertia < best[0]:
            best = (inertia, sorted(cents))
    return best


I2 = [[1.0, 0.0], [0.0, 1.0]]
print("dcl_i(I2, mu=0.1, gamma=0.3) per direction = %.6f" % dcl_direction(I2, [1, 1], 0.1, 0.3))
print("dcl_i(I2, mu=0.1, gamma=0.3) total         = %.6f" % dcl(I2, [1, 1], [1, 1], 0.1, 0.3))
print("single pair total                          = %.6f" % dcl([[1.0]], [1], [1], 0.1, 0.3))
print("dcl forward, div=(0.5,1)                   = %.6f" % dcl_direction(I2, [0.5, 1.0], 0.1, 0.3))
a = pre_div_std([0.5, 0.5], 0.1)
b = pre_div_std([0.5, 0.7], 0.1)
print("pre-norm div std (0.5,0.5), (0.5,0.7)      = %.6f, %.6f" % (a, b))
print("normalized                                 = %.6f, %.6f" % (a / max(a, b), b / max(a, b)))
p, h = entropy_bits([2.0, 0.0])
print("entropy p, H (bits) for (2,0)              = (%.6f, %.6f), %.6f" % (p[0], p[1], h))
print("uniform PGC, K=4                           = %.6f" % (2 * math.log(4)))
print("PGC K=2 logits (1,0) true 0                = %.6f" % (-2 * math.log(softmax([1.0, 0.0])[0])))
S = [[0.9, 0.8], [0.1, 0.7]]
hinge = 0.0
for i in range(2):
    for j in range(2):
        if i != j:
            hinge += max(0.0, 0.2 - S[i][i] + S[i][j]) + max(0.0, 0.2 - S[j][j] + S[i][j])
print("triplet hinge sum / N                      = %.6f" % (hinge / 2))
print("softmax(1,2,3)                             = %s" % ["%.5f" % v for v in softmax([1, 2, 3])])
print("sigmoid(1)                                 = %.6f" % sigmoid(1.0))
print("mdcl one orthogonal bank entry, per dir.   = %.6f" % (0.1 * (math.log(1 + math.exp(-3)) - math.log(2))))
print("kmeans {0,0.1,10,10.1} K=2                 = %s" % (kmeans_1d_brute([0, 0.1, 10, 10.1])[1],))
