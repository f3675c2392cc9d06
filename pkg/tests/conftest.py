import itertools

import numpy as np
import pytest

from mcm.geometry import HyperRect, RegionUnion

ACCEPTANCE_LINES = []


def grid_count_volume(boxes, zone, h):
    """Volume of (union of boxes) & zone by counting cell centers of an h-grid over the zone."""
    axes = [np.arange(lo + h / 2, hi, h) for lo, hi in zip(zone.lo, zone.hi)]
    if any(a.size == 0 for a in axes):
        return 0.0
    mesh = np.meshgrid(*axes, indexing="ij")
    inside = np.zeros(mesh[0].shape, dtype=bool)
    for b in boxes:
        m = np.ones_like(inside)
        for d, g in enumerate(mesh):
            m &= (g >= b.lo[d]) & (g <= b.hi[d])
        inside |= m
    return float(inside.sum()) * h ** len(axes)


def boundary_layer_volume(boxes, zone, h):
    """Worst-case miscount of center counting: for each clipped box, vol(widths + h) - vol(widths - h)."""
    total = 0.0
    for b in boxes:
        w = np.minimum(b.hi, zone.hi) - np.maximum(b.lo, zone.lo)
        if np.any(w < 0):
            continue
        total += np.prod(w + h) - np.prod(np.maximum(w - h, 0.0))
    return float(total)


def random_disjoint_region(rng, dim, cuts=2, keep=0.45, extent=1.0):
    """Random cuts per axis define a cell grid; a random subset of cells forms disjoint boxes."""
    edges = [np.concatenate([[0.0], np.sort(rng.random(cuts)) * extent, [extent]]) for _ in range(dim)]
    boxes = []
    for idx in itertools.product(*(range(len(e) - 1) for e in edges)):
        if rng.random() < keep:
            boxes.append(HyperRect([e[i] for e, i in zip(edges, idx)], [e[i + 1] for e, i in zip(edges, idx)]))
    return RegionUnion(dim, tuple(boxes))


def random_box(rng, dim, extent=1.0, min_width=0.05):
    lo = rng.random(dim) * (extent - min_width)
    hi = lo + min_width + rng.random(dim) * (extent - lo - min_width)
    return HyperRect(lo, hi)


def brute_force_best(U):
    """Best total utility over all one-to-one matchings covering the smaller side.

    Totals are summed left to right in ascending passenger (row) order, the
    same fixed order ``matching.solve`` reports.
    """
    n_p, n_d = U.shape
    if n_p <= n_d:
        perms = np.array(list(itertools.permutations(range(n_d), n_p)), dtype=int)
        total = np.zeros(len(perms))
        for i in range(n_p):
            total = total + U[i, perms[:, i]]
        return float(total.max())
    # drivers choose distinct passengers; unmatched passengers contribute an exact 0.0
    perms = np.array(list(itertools.permutations(range(n_p), n_d)), dtype=int)
    contrib = np.zeros((len(perms), n_p))
    for j in range(n_d):
        contrib[np.arange(len(perms)), perms[:, j]] = U[perms[:, j], j]
    total = np.zeros(len(perms))
    for i in range(n_p):
        total = total + contrib[:, i]
    return float(total.max())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
