"""Cell decomposition of a checkerboard realization at scale eps (for oracles)."""

import numpy as np

from heleshaw.elliptic import MicroMedium


def cells(omega, eps, l, r):
    """Nodes and the constant ``A, F`` on each cell of ``omega`` restricted to ``[l, r]``."""
    medium = MicroMedium(omega, eps)
    nodes = np.concatenate(([l], medium.breakpoints(l, r), [r]))
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    return nodes, medium.coeff("A", mids), medium.coeff("F", mids)
