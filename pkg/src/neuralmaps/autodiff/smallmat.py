"""Tiny dense matrices stored as nested lists of entries.

Each entry may be a float, a numpy array holding one value per sample, or a
taped :class:`~neuralmaps.autodiff.tape.Var`. All routines use plain
arithmetic, so they vectorize over samples and stay differentiable when the
entries are Vars. Shapes never exceed 3x3.
"""

from __future__ import annotations

import numpy as np

from .dual import sqrt


def from_array(a):
    """Split an array of shape (..., r, c) into an r x c nested list."""
    a = np.asarray(a, dtype=np.float64)
    return [[a[..., i, j] for j in range(a.shape[-1])] for i in range(a.shape[-2])]


def to_array(m):
    """Inverse of :func:`from_array` for numeric (non-Var) entries."""
    rows = [np.stack(np.broadcast_arrays(*[np.asarray(x, dtype=np.float64) for x in row]), axis=-1) for row in m]
    return np.stack(rows, axis=-2)


def values(m):
    """Raw numeric entries of a possibly taped matrix."""
    return [[getattr(x, "value", x) for x in row] for row in m]


def shape(m):
    return len(m), len(m[0])


def identity(n):
    return [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]


def transpose(m):
    return [list(col) for col in zip(*m)]


def matmul(a, b):
    n, k = shape(a)
    k2, p = shape(b)
    if k != k2:
        raise ValueError(f"inner dimensions differ: {k} vs {k2}")
    out = []
    for i in range(n):
        row = []
        for j in range(p):
            acc = a[i][0] * b[0][j]
            for t in range(1, k):
                acc = acc + a[i][t] * b[t][j]
            row.append(acc)
        out.append(row)
    return out


def add(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def scale(a, s):
    return [[x * s for x in row] for row in a]


def gram(a):
    """a^T a."""
    return matmul(transpose(a), a)


def trace(m):
    acc = m[0][0]
    for i in range(1, len(m)):
        acc = acc + m[i][i]
    return acc


def frobenius_sq(m):
    acc = 0.0
    for row in m:
        for x in row:
            acc = acc + x * x
    return acc


def frobenius(m):
    return sqrt(frobenius_sq(m))


def det2(m):
    return m[0][0] * m[1][1] - m[0][1] * m[1][0]


def inv2(m):
    d = det2(m)
    return [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]


def pinv_left(a):
    """Moore-Penrose pseudoinverse of a full column rank n x 2 matrix."""
    return matmul(inv2(gram(a)), transpose(a))


def column(m, j):
    return [row[j] for row in m]


def cross3(a, b):
    return [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]


def dot(a, b):
    acc = a[0] * b[0]
    for x, y in zip(a[1:], b[1:]):
        acc = acc + x * y
    return acc


def normalize(a):
    n = sqrt(dot(a, a))
    return [x / n for x in a]


def orthonormal_frame(a):
    """Gram-Schmidt basis (n x 2) of the column space of an n x 2 matrix."""
    c0, c1 = column(a, 0), column(a, 1)
    e0 = normalize(c0)
    proj = dot(e0, c1)
    e1 = normalize([y - proj * x for x, y in zip(e0, c1)])
    return [[x, y] for x, y in zip(e0, e1)]


def smallest_singular_value(a):
    """Per-sample smallest singular value of a numeric n x 2 matrix."""
    g = to_array(gram(values(a)))
    tr = g[..., 0, 0] + g[..., 1, 1]
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
    return np.sqrt(np.maximum(tr / 2.0 - disc, 0.0))
