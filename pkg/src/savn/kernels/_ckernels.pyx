# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (see ``_pykernels`` for the reference)."""
import numpy as np

from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemv, dger

cdef int[8] _DR = [-1, -1, 0, 1, 1, 1, 0, -1]
cdef int[8] _DC = [0, 1, 1, 1, 0, -1, -1, -1]


cdef inline double _sigmoid(double v) nogil:
    cdef double e
    if v >= 0:
        return 1.0 / (1.0 + exp(-v))
    e = exp(v)
    return e / (1.0 + e)


def lstm_forward(const double[:, ::1] W, const double[::1] b, const double[::1] x,
                 const double[::1] h, const double[::1] c):
    cdef int H = h.shape[0]
    cdef int I = x.shape[0]
    cdef int M = I + H
    cdef int N = 4 * H
    cdef int one = 1
    cdef double alpha = 1.0, beta = 1.0
    cdef char trans = b'T'
    cdef int j
    if W.shape[0] != N or W.shape[1] != M:
        raise ValueError("lstm weight shape mismatch")
    z_arr = np.empty(M)
    cdef double[::1] z = z_arr
    for j in range(I):
        z[j] = x[j]
    for j in range(H):
        z[I + j] = h[j]
    gates_arr = np.array(b, dtype=np.float64, copy=True)
    cdef double[::1] gates = gates_arr
    dgemv(&trans, &M, &N, &alpha, <double*>&W[0, 0], &M, &z[0], &one, &beta, &gates[0], &one)
    c_arr = np.empty(H)
    h_arr = np.empty(H)
    cdef double[::1] cn = c_arr
    cdef double[::1] hn = h_arr
    for j in range(2 * H):
        gates[j] = _sigmoid(gates[j])
    for j in range(2 * H, 3 * H):
        gates[j] = tanh(gates[j])
    for j in range(3 * H, 4 * H):
        gates[j] = _sigmoid(gates[j])
    for j in range(H):
        cn[j] = gates[H + j] * c[j] + gates[j] * gates[2 * H + j]
        hn[j] = gates[3 * H + j] * tanh(cn[j])
    return gates_arr, c_arr, h_arr


def lstm_backward(const double[:, ::1] W, const double[::1] x, const double[::1] h,
                  const double[::1] c, const double[::1] gates, const double[::1] c_new,
                  const double[::1] dh, const double[::1] dc_out):
    cdef int H = h.shape[0]
    cdef int I = x.shape[0]
    cdef int M = I + H
    cdef int N = 4 * H
    cdef int one = 1
    cdef double alpha = 1.0, beta = 0.0
    cdef char trans = b'N'
    cdef int j
    cdef double tc, dc, ig, fg, gg, og
    dpre_arr = np.empty(N)
    dcp_arr = np.empty(H)
    cdef double[::1] dpre = dpre_arr
    cdef double[::1] dcp = dcp_arr
    for j in range(H):
        ig = gates[j]
        fg = gates[H + j]
        gg = gates[2 * H + j]
        og = gates[3 * H + j]
        tc = tanh(c_new[j])
        dc = dc_out[j] + dh[j] * og * (1.0 - tc * tc)
        dpre[j] = dc * gg * ig * (1.0 - ig)
        dpre[H + j] = dc * c[j] * fg * (1.0 - fg)
        dpre[2 * H + j] = dc * ig * (1.0 - gg * gg)
        dpre[3 * H + j] = dh[j] * tc * og * (1.0 - og)
        dcp[j] = dc * fg
    z_arr = np.empty(M)
    cdef double[::1] z = z_arr
    for j in range(I):
        z[j] = x[j]
    for j in range(H):
        z[I + j] = h[j]
    dz_arr = np.empty(M)
    cdef double[::1] dz = dz_arr
    dgemv(&trans, &M, &N, &alpha, <double*>&W[0, 0], &M, &dpre[0], &one, &beta, &dz[0], &one)
    dW_arr = np.zeros((N, M))
    cdef double[:, ::1] dW = dW_arr
    dger(&M, &N, &alpha, &z[0], &one, &dpre[0], &one, &dW[0, 0], &M)
    return dW_arr, dpre_arr, dz_arr[:I], dz_arr[I:], dcp_arr


def observe_codes(const unsigned char[:, ::1] walls, const int[:, ::1] objects,
                  int row, int col, int heading, const long[:, :, :, ::1] offsets):
    cdef int H = walls.shape[0]
    cdef int Wd = walls.shape[1]
    cdef int w = offsets.shape[1]
    cdef int a, bb, r, cc, depth
    base_arr = np.zeros((w, w), dtype=np.int8)
    obj_arr = np.full((w, w), -1, dtype=np.int32)
    cdef signed char[:, ::1] base = base_arr
    cdef int[:, ::1] obj = obj_arr
    for a in range(w):
        for bb in range(w):
            r = row + <int>offsets[heading, a, bb, 0]
            cc = col + <int>offsets[heading, a, bb, 1]
            if r < 0 or r >= H or cc < 0 or cc >= Wd:
                base[a, bb] = 2
            elif walls[r, cc]:
                base[a, bb] = 1
            else:
                obj[a, bb] = objects[r, cc]
    depth = 0
    r = row + _DR[heading]
    cc = col + _DC[heading]
    while 0 <= r < H and 0 <= cc < Wd and not walls[r, cc] and objects[r, cc] < 0:
        depth += 1
        r += _DR[heading]
        cc += _DC[heading]
    return base_arr, obj_arr, depth


def bfs_distances(const unsigned char[:, ::1] walkable, const unsigned char[:, :, ::1] goal):
    cdef int H = walkable.shape[0]
    cdef int Wd = walkable.shape[1]
    cdef int total = H * Wd * 8
    dist_arr = np.full((H, Wd, 8), -1, dtype=np.int32)
    cdef int[:, :, ::1] dist = dist_arr
    queue_arr = np.empty(total, dtype=np.int32)
    cdef int[::1] queue = queue_arr
    cdef int head = 0, tail = 0
    cdef int r, c, d, s, nd, pd, pr, pc, k
    for r in range(H):
        for c in range(Wd):
            if not walkable[r, c]:
                continue
            for d in range(8):
                if goal[r, c, d]:
                    dist[r, c, d] = 0
                    queue[tail] = (r * Wd + c) * 8 + d
                    tail += 1
    while head < tail:
        s = queue[head]
        head += 1
        d = s % 8
        c = (s // 8) % Wd
        r = s // (8 * Wd)
        nd = dist[r, c, d] + 1
        for k in range(2):
            pd = (d + 7) % 8 if k == 0 else (d + 1) % 8
            if dist[r, c, pd] < 0:
                dist[r, c, pd] = nd
                queue[tail] = (r * Wd + c) * 8 + pd
                tail += 1
        pr = r - _DR[d]
        pc = c - _DC[d]
        if 0 <= pr < H and 0 <= pc < Wd and walkable[pr, pc] and dist[pr, pc, d] < 0:
            dist[pr, pc, d] = nd
            queue[tail] = (pr * Wd + pc) * 8 + d
            tail += 1
    return dist_arr
