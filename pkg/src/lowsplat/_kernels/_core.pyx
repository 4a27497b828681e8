# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled compositing kernels (tile-parallel backend).

Mirrors ``_pure.py`` operation for operation. Compiled with
``-ffp-contract=off`` so every expression rounds exactly like the scalar
Python fallback; both backends are bit-identical. Keep the two files in
sync; any arithmetic change must be made in both.

Tiles own disjoint pixel regions, so the forward pass is parallel over tiles
with bit-identical output for any thread count. The backward pass accumulates
per-(tile, splat) partials in parallel and merges them sequentially in
(tile, tile-local splat) order, so gradients are thread-count invariant too.
"""

from cython.parallel import prange
from libc.math cimport exp
from libc.stdlib cimport free, malloc

import numpy as np

cdef double _CUTOFF = 1.0 / 255.0
cdef double _CLAMP = 0.999
cdef double _T_MIN = 1e-4


def forward(double[:, ::1] mean2d, double[:, ::1] conic, double[:, ::1] color,
            double[::1] alpha, long[::1] tile_starts, int[::1] tile_ids,
            int width, int height, int tile, double[::1] bg, int n_threads=1):
    image_arr = np.empty((height, width, 3), dtype=np.float64)
    alpha_arr = np.empty((height, width), dtype=np.float64)
    contrib_arr = np.zeros((height, width), dtype=np.int32)
    cdef double[:, :, ::1] image = image_arr
    cdef double[:, ::1] alpha_map = alpha_arr
    cdef int[:, ::1] n_contrib = contrib_arr

    cdef int n_tx = (width + tile - 1) // tile
    cdef int n_ty = (height + tile - 1) // tile
    cdef int n_tiles = n_tx * n_ty
    cdef double bg_r = bg[0], bg_g = bg[1], bg_b = bg[2]

    cdef Py_ssize_t tile_idx, p, start, end
    cdef int tx0, ty0, px, py, i, n, y_end, x_end
    cdef double pcx, pcy, t_acc, acc_r, acc_g, acc_b
    cdef double dx, dy, q, w, tw

    for tile_idx in prange(n_tiles, nogil=True, schedule="static",
                           num_threads=n_threads):
        start = tile_starts[tile_idx]
        end = tile_starts[tile_idx + 1]
        tx0 = (tile_idx % n_tx) * tile
        ty0 = (tile_idx // n_tx) * tile
        y_end = ty0 + tile
        if y_end > height:
            y_end = height
        x_end = tx0 + tile
        if x_end > width:
            x_end = width
        for py in range(ty0, y_end):
            pcy = py + 0.5
            for px in range(tx0, x_end):
                pcx = px + 0.5
                t_acc = 1.0
                acc_r = 0.0
                acc_g = 0.0
                acc_b = 0.0
                n = 0
                for p in range(start, end):
                    i = tile_ids[p]
                    dx = pcx - mean2d[i, 0]
                    dy = pcy - mean2d[i, 1]
                    q = conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy + conic[i, 2] * dy * dy
                    w = alpha[i] * exp(-0.5 * q)
                    if w < _CUTOFF:
                        continue
                    if w > _CLAMP:
                        w = _CLAMP
                    tw = t_acc * w
                    acc_r = acc_r + tw * color[i, 0]
                    acc_g = acc_g + tw * color[i, 1]
                    acc_b = acc_b + tw * color[i, 2]
                    t_acc = t_acc * (1.0 - w)
                    n = n + 1
                    if t_acc < _T_MIN:
                        break
                image[py, px, 0] = acc_r + t_acc * bg_r
                image[py, px, 1] = acc_g + t_acc * bg_g
                image[py, px, 2] = acc_b + t_acc * bg_b
                alpha_map[py, px] = 1.0 - t_acc
                n_contrib[py, px] = n
    return image_arr, alpha_arr, contrib_arr


def backward(double[:, ::1] mean2d, double[:, ::1] conic, double[:, ::1] color,
             double[::1] alpha, long[::1] tile_starts, int[::1] tile_ids,
             int width, int height, int tile, double[::1] bg,
             double[:, :, ::1] upstream, int n_threads=1):
    cdef Py_ssize_t m = mean2d.shape[0]
    cdef Py_ssize_t n_pairs = tile_ids.shape[0]
    grads_arr = np.zeros((m, 9), dtype=np.float64)
    partial_arr = np.zeros((n_pairs, 9), dtype=np.float64)
    cdef double[:, ::1] grads = grads_arr
    cdef double[:, ::1] partial = partial_arr

    cdef int n_tx = (width + tile - 1) // tile
    cdef int n_ty = (height + tile - 1) // tile
    cdef int n_tiles = n_tx * n_ty
    cdef double bg_r = bg[0], bg_g = bg[1], bg_b = bg[2]

    cdef Py_ssize_t tile_idx, p, start, end, list_len, r_i
    cdef int tx0, ty0, px, py, i, y_end, x_end, n_rec, local_j, comp
    cdef double pcx, pcy, t_acc, dx, dy, q, g, w, tw, t_here
    cdef double up_r, up_g, up_b, s_r, s_g, s_b
    cdef double one_minus, dldw, dldq, ddx, ddy
    cdef int clamped
    cdef int *rec_local
    cdef int *rec_clamped
    cdef double *rec_w
    cdef double *rec_g
    cdef double *rec_t

    for tile_idx in prange(n_tiles, nogil=True, schedule="static",
                           num_threads=n_threads):
        start = tile_starts[tile_idx]
        end = tile_starts[tile_idx + 1]
        list_len = end - start
        if list_len == 0:
            continue
        rec_local = <int *> malloc(list_len * sizeof(int))
        rec_clamped = <int *> malloc(list_len * sizeof(int))
        rec_w = <double *> malloc(list_len * sizeof(double))
        rec_g = <double *> malloc(list_len * sizeof(double))
        rec_t = <double *> malloc(list_len * sizeof(double))
        tx0 = (tile_idx % n_tx) * tile
        ty0 = (tile_idx // n_tx) * tile
        y_end = ty0 + tile
        if y_end > height:
            y_end = height
        x_end = tx0 + tile
        if x_end > width:
            x_end = width
        for py in range(ty0, y_end):
            pcy = py + 0.5
            for px in range(tx0, x_end):
                up_r = upstream[py, px, 0]
                up_g = upstream[py, px, 1]
                up_b = upstream[py, px, 2]
                if up_r == 0.0 and up_g == 0.0 and up_b == 0.0:
                    continue
                pcx = px + 0.5
                # forward replay, recording each composited contribution
                n_rec = 0
                t_acc = 1.0
                for local_j in range(list_len):
                    i = tile_ids[start + local_j]
                    dx = pcx - mean2d[i, 0]
                    dy = pcy - mean2d[i, 1]
                    q = conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy + conic[i, 2] * dy * dy
                    g = exp(-0.5 * q)
                    w = alpha[i] * g
                    if w < _CUTOFF:
                        continue
                    clamped = w > _CLAMP
                    if clamped:
                        w = _CLAMP
                    rec_local[n_rec] = local_j
                    rec_clamped[n_rec] = clamped
                    rec_w[n_rec] = w
                    rec_g[n_rec] = g
                    rec_t[n_rec] = t_acc
                    n_rec = n_rec + 1
                    t_acc = t_acc * (1.0 - w)
                    if t_acc < _T_MIN:
                        break
                s_r = t_acc * bg_r
                s_g = t_acc * bg_g
                s_b = t_acc * bg_b
                for r_i in range(n_rec - 1, -1, -1):
                    local_j = rec_local[r_i]
                    w = rec_w[r_i]
                    g = rec_g[r_i]
                    t_here = rec_t[r_i]
                    i = tile_ids[start + local_j]
                    tw = t_here * w
                    partial[start + local_j, 5] += up_r * tw
                    partial[start + local_j, 6] += up_g * tw
                    partial[start + local_j, 7] += up_b * tw
                    one_minus = 1.0 - w
                    dldw = (up_r * (color[i, 0] * t_here - s_r / one_minus)
                            + up_g * (color[i, 1] * t_here - s_g / one_minus)
                            + up_b * (color[i, 2] * t_here - s_b / one_minus))
                    if not rec_clamped[r_i]:
                        partial[start + local_j, 8] += dldw * g
                        dldq = -0.5 * (dldw * alpha[i]) * g
                        dx = pcx - mean2d[i, 0]
                        dy = pcy - mean2d[i, 1]
                        partial[start + local_j, 2] += dldq * dx * dx
                        partial[start + local_j, 3] += dldq * 2.0 * dx * dy
                        partial[start + local_j, 4] += dldq * dy * dy
                        ddx = dldq * (2.0 * conic[i, 0] * dx + 2.0 * conic[i, 1] * dy)
                        ddy = dldq * (2.0 * conic[i, 1] * dx + 2.0 * conic[i, 2] * dy)
                        partial[start + local_j, 0] -= ddx
                        partial[start + local_j, 1] -= ddy
                    s_r = s_r + color[i, 0] * tw
                    s_g = s_g + color[i, 1] * tw
                    s_b = s_b + color[i, 2] * tw
        free(rec_local)
        free(rec_clamped)
        free(rec_w)
        free(rec_g)
        free(rec_t)

    # deterministic merge: (tile, tile-local splat) order
    for p in range(n_pairs):
        i = tile_ids[p]
        for comp in range(9):
            grads[i, comp] += partial[p, comp]
    return grads_arr
