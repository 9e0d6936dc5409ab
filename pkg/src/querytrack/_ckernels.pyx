# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: pairwise IoU/GIoU, min-cost assignment, greedy NMS.

Twin of ``_pykernels``: same algorithms, same iteration order and
tie-breaking, bit-identical outputs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

cdef double INF = float("inf")


def pairwise_iou(a, b):
    """IoU matrix between two box sets in (x1, y1, x2, y2) form."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] aa = np.ascontiguousarray(
        np.asarray(a, dtype=np.float64).reshape(-1, 4))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bb = np.ascontiguousarray(
        np.asarray(b, dtype=np.float64).reshape(-1, 4))
    cdef Py_ssize_t n = aa.shape[0], m = bb.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, m), dtype=np.float64)
    cdef double ax1, ay1, ax2, ay2, area_a, iw, ih, inter, union
    for i in range(n):
        ax1 = aa[i, 0]; ay1 = aa[i, 1]; ax2 = aa[i, 2]; ay2 = aa[i, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        for j in range(m):
            iw = min(ax2, bb[j, 2]) - max(ax1, bb[j, 0])
            ih = min(ay2, bb[j, 3]) - max(ay1, bb[j, 1])
            if iw <= 0.0 or ih <= 0.0:
                continue
            inter = iw * ih
            union = area_a + (bb[j, 2] - bb[j, 0]) * (bb[j, 3] - bb[j, 1]) - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


def pairwise_giou(a, b):
    """Generalized IoU matrix: IoU minus the enclosing-box penalty."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] aa = np.ascontiguousarray(
        np.asarray(a, dtype=np.float64).reshape(-1, 4))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bb = np.ascontiguousarray(
        np.asarray(b, dtype=np.float64).reshape(-1, 4))
    cdef Py_ssize_t n = aa.shape[0], m = bb.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, m), dtype=np.float64)
    cdef double ax1, ay1, ax2, ay2, area_a, iw, ih, inter, union, enclose, val
    for i in range(n):
        ax1 = aa[i, 0]; ay1 = aa[i, 1]; ax2 = aa[i, 2]; ay2 = aa[i, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        for j in range(m):
            iw = min(ax2, bb[j, 2]) - max(ax1, bb[j, 0])
            ih = min(ay2, bb[j, 3]) - max(ay1, bb[j, 1])
            if iw < 0.0: iw = 0.0
            if ih < 0.0: ih = 0.0
            inter = iw * ih
            union = area_a + (bb[j, 2] - bb[j, 0]) * (bb[j, 3] - bb[j, 1]) - inter
            val = inter / union if union > 0.0 else 0.0
            enclose = (max(ax2, bb[j, 2]) - min(ax1, bb[j, 0])) * (
                max(ay2, bb[j, 3]) - min(ay1, bb[j, 1]))
            if enclose > 0.0:
                val -= (enclose - union) / enclose
            out[i, j] = val
    return out


def lap_solve(cost):
    """Min-cost assignment by shortest augmenting paths (Jonker-Volgenant)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(
        np.asarray(cost, dtype=np.float64))
    cdef Py_ssize_t n = c.shape[0], m = c.shape[1]
    if n == 0 or m == 0:
        return (np.full(n, -1, dtype=np.int64), np.full(m, -1, dtype=np.int64))
    if n > m:
        t_col4row, t_row4col = lap_solve(c.T)
        return t_row4col, t_col4row

    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.zeros(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] col4row = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] row4col = np.full(m, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] shortest = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] path = np.empty(m, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] scanned_rows = np.empty(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] scanned_cols = np.empty(m, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] remaining = np.empty(m, dtype=np.int64)
    cdef Py_ssize_t cur_row, i, j, it, index, num_remaining, ip, jp, sink, tmp
    cdef double min_val, lowest, r

    for cur_row in range(n):
        for jp in range(m):
            shortest[jp] = INF
            path[jp] = -1
            scanned_cols[jp] = 0
            remaining[jp] = jp
        for ip in range(n):
            scanned_rows[ip] = 0
        num_remaining = m
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            scanned_rows[i] = 1
            index = -1
            lowest = INF
            for it in range(num_remaining):
                j = remaining[it]
                r = min_val + c[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    shortest[j] = r
                    path[j] = i
                # Prefer an unassigned sink on ties so augmentation ends early.
                if shortest[j] < lowest or (
                    shortest[j] == lowest and row4col[j] == -1
                ):
                    lowest = shortest[j]
                    index = it
            min_val = lowest
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            scanned_cols[j] = 1
            num_remaining -= 1
            remaining[index] = remaining[num_remaining]
        u[cur_row] += min_val
        for ip in range(n):
            if scanned_rows[ip] and ip != cur_row:
                u[ip] += min_val - shortest[col4row[ip]]
        for jp in range(m):
            if scanned_cols[jp]:
                v[jp] -= min_val - shortest[jp]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur_row:
                break
    return col4row, row4col


def nms_keep(boxes, scores, double iou_thresh):
    """Greedy descending-score suppression; see the pure twin for semantics."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bx = np.ascontiguousarray(
        np.asarray(boxes, dtype=np.float64).reshape(-1, 4))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sc = np.ascontiguousarray(
        np.asarray(scores, dtype=np.float64).reshape(-1))
    cdef Py_ssize_t n = bx.shape[0], pos, qos, i, j
    cdef cnp.ndarray[cnp.int64_t, ndim=1] suppressor = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return np.empty(0, dtype=np.int64), suppressor
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.argsort(
        -sc, kind="stable").astype(np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] iou = pairwise_iou(bx, bx)
    kept = []
    for pos in range(n):
        i = order[pos]
        if suppressor[i] != -1:
            continue
        kept.append(i)
        for qos in range(pos + 1, n):
            j = order[qos]
            if suppressor[j] == -1 and iou[i, j] > iou_thresh:
                suppressor[j] = i
    return np.array(sorted(kept), dtype=np.int64), suppressor
