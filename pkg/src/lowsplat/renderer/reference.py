"""Naive per-pixel full-list compositing renderer.

Every pixel walks the entire depth-sorted splat list with no tiling and no
binning. This is the correctness oracle for the tiled kernels: outputs must
be bit-identical. The per-contribution arithmetic matches
``lowsplat._kernels._pure`` line for line.
"""

from __future__ import annotations

import math

import numpy as np

from .projection import SplatList

_CUTOFF = 1.0 / 255.0
_CLAMP = 0.999
_T_MIN = 1e-4


def composite_reference(splats: SplatList, bg) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Composite a projected splat list the slow, obvious way."""
    width, height = splats.width, splats.height
    image = np.empty((height, width, 3), dtype=np.float64)
    alpha_map = np.empty((height, width), dtype=np.float64)
    n_contrib = np.zeros((height, width), dtype=np.int32)

    mx = splats.mean2d[:, 0].tolist()
    my = splats.mean2d[:, 1].tolist()
    ka = splats.conic[:, 0].tolist()
    kb = splats.conic[:, 1].tolist()
    kc = splats.conic[:, 2].tolist()
    cr = splats.color[:, 0].tolist()
    cg = splats.color[:, 1].tolist()
    cb = splats.color[:, 2].tolist()
    al = splats.alpha.tolist()
    order = range(len(splats))
    bg_r, bg_g, bg_b = float(bg[0]), float(bg[1]), float(bg[2])
    exp = math.exp

    for py in range(height):
        pcy = py + 0.5
        for px in range(width):
            pcx = px + 0.5
            t_acc = 1.0
            acc_r = 0.0
            acc_g = 0.0
            acc_b = 0.0
            n = 0
            for i in order:
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
