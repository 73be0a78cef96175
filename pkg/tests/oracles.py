"""Independent blade oracles: set algebra plus permutation-matrix determinants."""

import numpy as np


def perm_det_sign(seq):
    """Sign of a permutation as the determinant of its permutation matrix."""
    order = sorted(seq)
    m = np.zeros((len(seq), len(seq)))
    for row, s in enumerate(seq):
        m[row, order.index(s)] = 1.0
    return int(round(np.linalg.det(m)))


def oracle_wedge_blades(dim, a, b):
    """e_A v e_B from set algebra: zero on overlap, otherwise sign of the concatenation."""
    if set(a) & set(b):
        return None, 0
    return tuple(sorted(a + b)), perm_det_sign(a + b)


def oracle_star_blade(dim, s):
    comp = tuple(i for i in range(dim) if i not in s)
    return comp, perm_det_sign(s + comp)


def oracle_regressive_blades(dim, a, b):
    ca, sa = oracle_star_blade(dim, a)
    cb, sb = oracle_star_blade(dim, b)
    w, sw = oracle_wedge_blades(dim, ca, cb)
    if w is None:
        return None, 0
    r, sr = oracle_star_blade(dim, w)
    return r, sa * sb * sw * sr
