"""Pure-Python compositing kernels (fallback backend).

These mirror ``_core.pyx`` operation for operation: same traversal order,
same expression shapes, scalar IEEE-754 doubles, libm ``exp`` via
``math.exp``. The compiled core is built with FP contraction disabled, so
both backends produce bit-identical images and gradients. Keep the two files
in sync; any arithmetic change must be made in both.

``n_threads`` is accepted for API parity; execution is sequential, which is
valid because results are thread-count invariant by construction.
"""

from __future__ import annotations

import math

import numpy as np

_CUTOFF = 1.0 / 255.0
_CLAMP = 0.999
_T_MIN = 1e-4


def forward(mean2d, conic, color, alpha, tile_starts, tile_ids, width, height,
            tile, bg, n_threads=1):
    """Front-to-back alpha compositing over depth-sorted, tile-binned splats.

    Returns (image (H,W,3), alpha_map (H,W), n_contrib (H,W) int32).
    """
    image = np.empty((height, width, 3), dtype=np.float64)
    alpha_map = np.empty((height, width), dtype=np.float64)
    n_contrib = np.zeros((height, width), dtype=np.int32)

    mx = mean2d[:, 0].tolist()
    my = mean2d[:, 1].tolist()
    ka = conic[:, 0].tolist()
    kb = conic[:, 1].tolist()
    kc = conic[:, 2].tolist()
    cr = color[:, 0].tolist()
    cg = color[:, 1].tolist()
    cb = color[:, 2].tolist()
    al = alpha.tolist()
    bg_r, bg_g, bg_b = float(bg[0]), float(bg[1]), float(bg[2])

    n_tx = (width + tile - 1) // tile
    n_ty = (height + tile - 1) // tile
    exp = math.exp

    for tile_idx in range(n_tx * n_ty):
        ids = tile_ids[tile_starts[tile_idx]:tile_starts[tile_idx + 1]].tolist()
        tx0 = (tile_idx % n_tx) * tile
        ty0 = (tile_idx // n_tx) * tile
        for py in range(ty0, min(ty0 + tile, height)):
            pcy = py + 0.5
            for px in range(tx0, min(tx0 + tile, width)):
                pcx = px + 0.5
                t_acc = 1.0
                acc_r = 0.0
                acc_g = 0.0
                acc_b = 0.0
                n = 0
                for i in ids:
                    dx = pcx - mx[i]
                    dy = pcy - my[i]
                    q = ka[i] * dx * dx + 2.0 * kb[i] * dx * dy + kc[i] * dy * dy
                    w = al[i] * exp(-0.5 * q)
                    if w < _CUTOFF:
                        continue
                    if w > _CLAMP:
                        w = _CLAMP
                    tw = t_acc * w
                    acc_r = acc_r + tw * cr[i]
                    acc_g = acc_g + tw * cg[i]
                    acc_b = acc_b + tw * cb[i]
                    t_acc = t_acc * (1.0 - w)
                    n += 1
                    if t_acc < _T_MIN:
                        break
                image[py, px, 0] = acc_r + t_acc * bg_r
                image[py, px, 1] = acc_g + t_acc * bg_g
                image[py, px, 2] = acc_b + t_acc * bg_b
                alpha_map[py, px] = 1.0 - t_acc
                n_contrib[py, px] = n
    return image, alpha_map, n_contrib


def backward(mean2d, conic, color, alpha, tile_starts, tile_ids, width, height,
             tile, bg, upstream, n_threads=1):
    """Gradients of the composited image w.r.t. screen-space splat parameters.

    Returns (M, 9) rows [d mean2d (2), d conic (3), d color (3), d alpha].
    Per-pixel weights and transmittances are replayed exactly as in
    ``forward``; the weight clamp and the 1/255 cutoff contribute zero
    gradient. Accumulation order is (tile, tile-local splat), independent of
    any parallel execution, so results are reproducible.
    """
    m = len(mean2d)
    grads = np.zeros((m, 9), dtype=np.float64)

    mx = mean2d[:, 0].tolist()
    my = mean2d[:, 1].tolist()
    ka = conic[:, 0].tolist()
    kb = conic[:, 1].tolist()
    kc = conic[:, 2].tolist()
    cr = color[:, 0].tolist()
    cg = color[:, 1].tolist()
    cb = color[:, 2].tolist()
    al = alpha.tolist()
    bg_r, bg_g, bg_b = float(bg[0]), float(bg[1]), float(bg[2])

    n_tx = (width + tile - 1) // tile
    n_ty = (height + tile - 1) // tile
    exp = math.exp

    for tile_idx in range(n_tx * n_ty):
        start = int(tile_starts[tile_idx])
        ids = tile_ids[start:int(tile_starts[tile_idx + 1])].tolist()
        if not ids:
            continue
        partial = [[0.0] * 9 for _ in ids]
        tx0 = (tile_idx % n_tx) * tile
        ty0 = (tile_idx // n_tx) * tile
        for py in range(ty0, min(ty0 + tile, height)):
            pcy = py + 0.5
            for px in range(tx0, min(tx0 + tile, width)):
                up_r = upstream[py, px, 0]
                up_g = upstream[py, px, 1]
                up_b = upstream[py, px, 2]
                if up_r == 0.0 and up_g == 0.0 and up_b == 0.0:
                    continue
                pcx = px + 0.5
                # forward replay, recording each composited contribution
                rec = []
                t_acc = 1.0
                for local_j, i in enumerate(ids):
                    dx = pcx - mx[i]
                    dy = pcy - my[i]
                    q = ka[i] * dx * dx + 2.0 * kb[i] * dx * dy + kc[i] * dy * dy
                    g = exp(-0.5 * q)
                    w = al[i] * g
                    if w < _CUTOFF:
                        continue
                    clamped = w > _CLAMP
                    if clamped:
                        w = _CLAMP
                    rec.append((local_j, w, g, t_acc, clamped))
                    t_acc = t_acc * (1.0 - w)
                    if t_acc < _T_MIN:
                        break
                s_r = t_acc * bg_r
                s_g = t_acc * bg_g
                s_b = t_acc * bg_b
                for local_j, w, g, t_here, clamped in reversed(rec):
                    i = ids[local_j]
                    tw = t_here * w
                    pg = partial[local_j]
                    pg[5] += up_r * tw
                    pg[6] += up_g * tw
                    pg[7] += up_b * tw
                    one_minus = 1.0 - w
                    dldw = (
                        up_r * (cr[i] * t_here - s_r / one_minus)
                        + up_g * (cg[i] * t_here - s_g / one_minus)
                        + up_b * (cb[i] * t_here - s_b / one_minus)
                    )
                    if not clamped:
                        pg[8] += dldw * g
                        dldq = -0.5 * (dldw * al[i]) * g
                        dx = pcx - mx[i]
                        dy = pcy - my[i]
                        pg[2] += dldq * dx * dx
                        pg[3] += dldq * 2.0 * dx * dy
                        pg[4] += dldq * dy * dy
                        ddx = dldq * (2.0 * ka[i] * dx + 2.0 * kb[i] * dy)
                        ddy = dldq * (2.0 * kb[i] * dx + 2.0 * kc[i] * dy)
                        pg[0] -= ddx
                        pg[1] -= ddy
                    s_r = s_r + cr[i] * tw
                    s_g = s_g + cg[i] * tw
                    s_b = s_b + cb[i] * tw
        for local_j, i in enumerate(ids):
            row = grads[i]
            pg = partial[local_j]
            for comp in range(9):
                row[comp] += pg[comp]
    return grads
