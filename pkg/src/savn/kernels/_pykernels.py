"""Pure numpy/Python versions of the hot kernels.

Signatures and outputs mirror ``_ckernels``; the two are checked against each
other in the test suite.
"""
from collections import deque

import numpy as np

# (drow, dcol) for the 8 compass headings, clockwise from north.
HEADING_STEPS = np.array(
    [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)],
    dtype=np.int64,
)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(W, b, x, h, c):
    """Fused LSTM cell. Gate order is (input, forget, cell, output).

    Returns ``(gates, c_new, h_new)`` where ``gates`` holds the activated gate
    values, which the backward kernel reuses.
    """
    H = h.shape[0]
    z = np.concatenate((x, h))
    pre = W @ z + b
    gates = np.empty(4 * H)
    gates[: 2 * H] = _sigmoid(pre[: 2 * H])
    gates[2 * H : 3 * H] = np.tanh(pre[2 * H : 3 * H])
    gates[3 * H :] = _sigmoid(pre[3 * H :])
    c_new = gates[H : 2 * H] * c + gates[:H] * gates[2 * H : 3 * H]
    h_new = gates[3 * H :] * np.tanh(c_new)
    return gates, c_new, h_new


def lstm_backward(W, x, h, c, gates, c_new, dh, dc_out):
    """First-order VJP of :func:`lstm_forward`.

    Returns ``(dW, db, dx, dh_prev, dc_prev)``.
    """
    H = h.shape[0]
    I = x.shape[0]
    i, f, g, o = gates[:H], gates[H : 2 * H], gates[2 * H : 3 * H], gates[3 * H :]
    tc = np.tanh(c_new)
    dc = dc_out + dh * o * (1.0 - tc * tc)
    dpre = np.empty(4 * H)
    dpre[:H] = dc * g * i * (1.0 - i)
    dpre[H : 2 * H] = dc * c * f * (1.0 - f)
    dpre[2 * H : 3 * H] = dc * i * (1.0 - g * g)
    dpre[3 * H :] = dh * tc * o * (1.0 - o)
    z = np.concatenate((x, h))
    dW = np.outer(dpre, z)
    dz = W.T @ dpre
    return dW, dpre, dz[:I], dz[I:], dc * f


def observe_codes(walls, objects, row, col, heading, offsets):
    """Egocentric window lookup.

    ``offsets[heading]`` is a ``(w, w, 2)`` table of world offsets for each
    window cell. Returns ``(base, obj, depth)``: per-cell code 0 free / 1 wall /
    2 out of bounds, per-cell object class (-1 for none), and the number of
    cells the agent can advance along its heading before being blocked.
    """
    H, W = walls.shape
    table = offsets[heading]
    w = table.shape[0]
    base = np.zeros((w, w), dtype=np.int8)
    obj = np.full((w, w), -1, dtype=np.int32)
    for a in range(w):
        for b in range(w):
            r = row + table[a, b, 0]
            cc = col + table[a, b, 1]
            if r < 0 or r >= H or cc < 0 or cc >= W:
                base[a, b] = 2
            elif walls[r, cc]:
                base[a, b] = 1
            else:
                obj[a, b] = objects[r, cc]
    dr, dc = HEADING_STEPS[heading]
    depth = 0
    r, cc = row + dr, col + dc
    while 0 <= r < H and 0 <= cc < W and not walls[r, cc] and objects[r, cc] < 0:
        depth += 1
        r += dr
        cc += dc
    return base, obj, depth


def bfs_distances(walkable, goal):
    """Backward BFS over (row, col, heading) states.

    ``goal`` is an ``(H, W, 8)`` mask of terminal states. Moves advance one
    cell along the heading; rotations turn by one heading step. Returns the
    minimum action count to reach any goal state, -1 if unreachable.
    """
    H, W = walkable.shape
    dist = np.full((H, W, 8), -1, dtype=np.int32)
    queue = deque()
    for r, c, d in zip(*np.nonzero(goal)):
        if walkable[r, c]:
            dist[r, c, d] = 0
            queue.append((int(r), int(c), int(d)))
    while queue:
        r, c, d = queue.popleft()
        nd = dist[r, c, d] + 1
        # predecessors by rotation: RotateRight from d-1, RotateLeft from d+1
        for pd in ((d - 1) % 8, (d + 1) % 8):
            if dist[r, c, pd] < 0:
                dist[r, c, pd] = nd
                queue.append((r, c, pd))
        pr = r - HEADING_STEPS[d, 0]
        pc = c - HEADING_STEPS[d, 1]
        if 0 <= pr < H and 0 <= pc < W and walkable[pr, pc] and dist[pr, pc, d] < 0:
            dist[pr, pc, d] = nd
            queue.append((int(pr), int(pc), d))
    return dist
