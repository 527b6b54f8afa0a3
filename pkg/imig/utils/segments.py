"""
imig - Segment Matching
========================
Sweep for collinear axis-aligned segments that overlap along a positive length.
Used to find edge neighbours between cells of non-conforming (hanging-node) meshes.
"""

import numpy as np


def line_keys(coordinate, quantum):
    """Integer key per segment for the line it lies on."""
    return np.round(np.asarray(coordinate) / quantum).astype(np.int64)


def overlapping_segments(line, lo, hi, tol):
    """
    Pairs of segments on the same line whose extents overlap by more than tol.

    Args:
        line: integer line key per segment (n,)
        lo, hi: extent along the line, lo < hi (n,)
        tol: minimum overlap length

    Returns:
        (first, second, start, end): indices into the input and the overlap interval.
    """
    line = np.asarray(line)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    order = np.lexsort((lo, line))
    line_s, lo_s, hi_s = line[order], lo[order], hi[order]
    n = order.size

    firsts, seconds = [], []
    candidates = np.arange(n)
    offset = 1
    # lo is sorted within a line, so once a segment stops overlapping its k-th
    # successor it cannot overlap any later one
    while candidates.size:
        succ = candidates + offset
        valid = succ < n
        candidates, succ = candidates[valid], succ[valid]
        hit = (line_s[succ] == line_s[candidates]) & (lo_s[succ] < hi_s[candidates] - tol)
        candidates, succ = candidates[hit], succ[hit]
        firsts.append(candidates)
        seconds.append(succ)
        offset += 1

    first = np.concatenate(firsts) if firsts else np.empty(0, dtype=int)
    second = np.concatenate(seconds) if seconds else np.empty(0, dtype=int)
    start = np.maximum(lo_s[first], lo_s[second])
    end = np.minimum(hi_s[first], hi_s[second])
    keep = end - start > tol
    return order[first[keep]], order[second[keep]], start[keep], end[keep]
