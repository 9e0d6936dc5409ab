"""Pure numpy kernels: pairwise IoU/GIoU, min-cost assignment, greedy NMS.

This is the fallback twin of the compiled extension ``_ckernels``. Both
implement the exact same algorithms with the same iteration order and
tie-breaking, so they produce bit-identical outputs.
"""

import numpy as np

BACKEND = "pure"

_INF = float("inf")


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between two box sets in (x1, y1, x2, y2) form.

    Degenerate pairs (zero union area) score 0.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def pairwise_giou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Generalized IoU matrix: IoU minus the enclosing-box penalty."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iou = pairwise_iou(a, b)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    union = area_a[:, None] + area_b[None, :] - wh[:, :, 0] * wh[:, :, 1]
    elt = np.minimum(a[:, None, :2], b[None, :, :2])
    erb = np.maximum(a[:, None, 2:], b[None, :, 2:])
    ewh = erb - elt
    enclose = ewh[:, :, 0] * ewh[:, :, 1]
    penalty = np.zeros_like(enclose)
    np.divide(enclose - union, enclose, out=penalty, where=enclose > 0.0)
    return iou - penalty


def lap_solve(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-cost assignment by shortest augmenting paths (Jonker-Volgenant).

    `cost` must be finite. Returns (col4row, row4col): for a rows x cols
    matrix, col4row[i] is the column matched to row i (-1 if unmatched) and
    row4col[j] the row matched to column j. Exactly min(rows, cols) pairs
    are produced. Fully deterministic, including tie resolution.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n == 0 or m == 0:
        return np.full(n, -1, dtype=np.int64), np.full(m, -1, dtype=np.int64)
    if n > m:
        col4row, row4col = lap_solve(cost.T)
        return row4col, col4row
    u = np.zeros(n)
    v = np.zeros(m)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(m, -1, dtype=np.int64)
    for cur_row in range(n):
        shortest = np.full(m, _INF)
        path = np.full(m, -1, dtype=np.int64)
        scanned_rows = np.zeros(n, dtype=bool)
        scanned_cols = np.zeros(m, dtype=bool)
        remaining = list(range(m))
        num_remaining = m
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            scanned_rows[i] = True
            index = -1
            lowest = _INF
            for it in range(num_remaining):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
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
            scanned_cols[j] = True
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
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break
    return col4row, row4col


def nms_keep(
    boxes: np.ndarray, scores: np.ndarray, iou_thresh: float
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy descending-score suppression.

    A box is suppressed iff it overlaps an already-kept higher-score box
    with IoU strictly above `iou_thresh`. Ties in score are broken by the
    lower input index. Returns (kept indices ascending, suppressor): for
    suppressed box i, suppressor[i] is the kept box that removed it, else -1.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = boxes.shape[0]
    suppressor = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return np.empty(0, dtype=np.int64), suppressor
    order = np.argsort(-scores, kind="stable")
    iou = pairwise_iou(boxes, boxes)
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
