"""Independent oracles kept apart from the code paths they check."""

import numpy as np


def cubical_euler(mask):
    """V - E + F over the adjacency complex of a (4, 8) pixel set.

    Faces are pixels, edges are 4-adjacent pairs, vertices are full 2x2
    blocks; this equals components minus holes under foreground
    4-connectivity with 8-connected holes.
    """
    m = np.asarray(mask, dtype=bool)
    faces = int(m.sum())
    edges = int((m[:, :-1] & m[:, 1:]).sum()) + int((m[:-1, :] & m[1:, :]).sum())
    quads = int((m[:-1, :-1] & m[:-1, 1:] & m[1:, :-1] & m[1:, 1:]).sum())
    return faces - edges + quads


def entropy_bits(measures):
    p = np.asarray(measures, dtype=float)
    p = p[p > 0]
    p = p / p.sum()
    return float(-(p * np.log2(p)).sum())


def central_difference_gradient(field, x, y, h=1e-5):
    fx = (field.value_at(x + h, y) - field.value_at(x - h, y)) / (2 * h)
    fy = (field.value_at(x, y + h) - field.value_at(x, y - h)) / (2 * h)
    return fx, fy


def conditional_entropy_bruteforce(labels_a, labels_b):
    """Direct double sum over the joint pixel table."""
    a = labels_a.ravel()
    b = labels_b.ravel()
    keep = (a > 0) & (b > 0)
    a, b = a[keep], b[keep]
    total = len(a)
    out = 0.0
    for bj in np.unique(b):
        sel = b == bj
        nb = sel.sum()
        for ai in np.unique(a[sel]):
            c = int(((a == ai) & sel).sum())
            out -= c / total * np.log2(c / nb)
    return out
