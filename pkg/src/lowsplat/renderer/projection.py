"""Screen-space projection of 3D Gaussians (shared by every render backend).

A 3D Gaussian is linearized through the pinhole projection: with W the
world-to-camera rotation, t the camera-frame mean, and J the 2x3 Jacobian of
perspective projection at t, the screen covariance is J W Sigma W^T J^T plus
a constant diagonal dilation that keeps sub-pixel splats well conditioned.

Splats behind the near plane, or whose 3-sigma screen circle misses the image
rectangle, or whose opacity can never reach the compositing weight cutoff,
are culled here; all backends consume the same culled, depth-sorted list, so
their outputs agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import CameraView
from ..gaussians import (
    GaussianPrimitive,
    GaussianScene,
    quat_normalize,
    quat_to_rotmat,
    sh_basis,
    squash_opacity,
)

COV2D_DILATION = 0.3       # px^2 added to the screen covariance diagonal
WEIGHT_CUTOFF = 1.0 / 255.0
WEIGHT_CLAMP = 0.999
TRANSMITTANCE_MIN = 1e-4   # per-pixel early-out threshold
CULL_SIGMAS = 3.0
TILE_SIZE = 16


@dataclass
class Splat2D:
    """Single projected Gaussian (contract/test view of the arrays below)."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    alpha: float
    source_index: int


@dataclass
class SplatList:
    """Depth-sorted projected splats plus backward-chain intermediates.

    Arrays are indexed by kept-splat position; ``source_index`` maps back to
    the scene primitive. ``conic`` holds (a, b, c) of the inverse dilated
    screen covariance, ``radius_bin`` a conservative radius outside which the
    compositing weight is guaranteed below the 1/255 cutoff.
    """

    width: int
    height: int
    n_source: int
    source_index: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray
    depth: np.ndarray
    color: np.ndarray
    alpha: np.ndarray
    radius_bin: np.ndarray
    # intermediates for the parameter-gradient chain
    t_cam: np.ndarray
    view_dir: np.ndarray
    view_dist: np.ndarray
    basis: np.ndarray
    color_raw: np.ndarray

    def __len__(self) -> int:
        return len(self.source_index)


def project_splats(scene: GaussianScene, cam: CameraView) -> SplatList:
    """Project every primitive; cull, sort by depth (ties keep scene order)."""
    n = len(scene)
    rc = cam.pose.rotation
    o = cam.center
    k = cam.intrinsics

    if n == 0:
        empty = lambda *s: np.empty(s, dtype=np.float64)
        return SplatList(
            width=cam.width, height=cam.height, n_source=0,
            source_index=np.empty(0, dtype=np.int32),
            mean2d=empty(0, 2), cov2d=empty(0, 3), conic=empty(0, 3),
            depth=empty(0), color=empty(0, 3), alpha=empty(0),
            radius_bin=empty(0), t_cam=empty(0, 3), view_dir=empty(0, 3),
            view_dist=empty(0), basis=empty(0, (scene.sh_degree + 1) ** 2),
            color_raw=empty(0, 3),
        )

    quats = quat_normalize(scene.rotations)
    rot = quat_to_rotmat(quats)
    s = np.exp(scene.log_scales)
    m3 = rot * s[:, None, :]
    sigma3 = m3 @ np.swapaxes(m3, 1, 2)

    t = (scene.means - o) @ rc
    tz = t[:, 2]
    visible = tz > cam.near
    tz_safe = np.where(visible, tz, 1.0)

    u = k.fx * t[:, 0] / tz_safe + k.cx
    v = k.fy * t[:, 1] / tz_safe + k.cy

    inv_z = 1.0 / tz_safe
    inv_z2 = inv_z * inv_z
    jac = np.zeros((n, 2, 3), dtype=np.float64)
    jac[:, 0, 0] = k.fx * inv_z
    jac[:, 0, 2] = -k.fx * t[:, 0] * inv_z2
    jac[:, 1, 1] = k.fy * inv_z
    jac[:, 1, 2] = -k.fy * t[:, 1] * inv_z2
    mjw = jac @ rc.T
    cov_full = mjw @ sigma3 @ np.swapaxes(mjw, 1, 2)
    ca = cov_full[:, 0, 0] + COV2D_DILATION
    cb = cov_full[:, 0, 1]
    cc = cov_full[:, 1, 1] + COV2D_DILATION

    lam_max = 0.5 * (ca + cc) + np.sqrt(np.maximum(0.25 * (ca - cc) ** 2 + cb * cb, 0.0))
    r_cull = CULL_SIGMAS * np.sqrt(lam_max)
    on_screen = (
        (u + r_cull > 0.0)
        & (u - r_cull < cam.width)
        & (v + r_cull > 0.0)
        & (v - r_cull < cam.height)
    )

    alpha = squash_opacity(scene.opacity_logits)
    can_contribute = alpha * 255.0 > 1.0

    keep = np.flatnonzero(visible & on_screen & can_contribute)
    order = keep[np.argsort(tz[keep], kind="stable")]

    mean2d = np.stack([u[order], v[order]], axis=1)
    cov2d = np.stack([ca[order], cb[order], cc[order]], axis=1)
    det = cov2d[:, 0] * cov2d[:, 2] - cov2d[:, 1] ** 2
    conic = np.stack(
        [cov2d[:, 2] / det, -cov2d[:, 1] / det, cov2d[:, 0] / det], axis=1
    )

    # support radius of the w >= 1/255 region, padded against rounding
    q_max = 2.0 * np.log(255.0 * alpha[order])
    radius_bin = np.sqrt(q_max * lam_max[order]) * (1.0 + 1e-12) + 1e-12

    vec = scene.means[order] - o
    dist = np.linalg.norm(vec, axis=1)
    view_dir = vec / dist[:, None]
    basis = sh_basis(view_dir, scene.sh_degree)
    color_raw = np.einsum("mk,mkc->mc", basis, scene.sh[order]) + 0.5
    color = np.clip(color_raw, 0.0, 1.0)

    return SplatList(
        width=cam.width, height=cam.height, n_source=n,
        source_index=order.astype(np.int32),
        mean2d=np.ascontiguousarray(mean2d),
        cov2d=np.ascontiguousarray(cov2d),
        conic=np.ascontiguousarray(conic),
        depth=np.ascontiguousarray(tz[order]),
        color=np.ascontiguousarray(color),
        alpha=np.ascontiguousarray(alpha[order]),
        radius_bin=np.ascontiguousarray(radius_bin),
        t_cam=np.ascontiguousarray(t[order]),
        view_dir=np.ascontiguousarray(view_dir),
        view_dist=np.ascontiguousarray(dist),
        basis=np.ascontiguousarray(basis),
        color_raw=np.ascontiguousarray(color_raw),
    )


def project_gaussian(g: GaussianPrimitive, cam: CameraView) -> Splat2D | None:
    """Project one primitive; returns None when it is culled."""
    scene = GaussianScene.from_primitives([g])
    splats = project_splats(scene, cam)
    if len(splats) == 0:
        return None
    return Splat2D(
        mean2d=splats.mean2d[0],
        cov2d=np.array(
            [
                [splats.cov2d[0, 0], splats.cov2d[0, 1]],
                [splats.cov2d[0, 1], splats.cov2d[0, 2]],
            ]
        ),
        depth=float(splats.depth[0]),
        color=splats.color[0],
        alpha=float(splats.alpha[0]),
        source_index=0,
    )


def build_tile_lists(splats: SplatList, tile: int = TILE_SIZE):
    """Bin splats into image tiles, preserving depth order within each tile.

    Returns (tile_starts, tile_ids) where tile t owns splat positions
    ``tile_ids[tile_starts[t]:tile_starts[t+1]]``. Binning is conservative
    for the 1/255 weight cutoff: any splat that could pass the cutoff at some
    pixel of a tile is listed for that tile.
    """
    m = len(splats)
    n_tx = (splats.width + tile - 1) // tile
    n_ty = (splats.height + tile - 1) // tile
    n_tiles = n_tx * n_ty
    if m == 0:
        return np.zeros(n_tiles + 1, dtype=np.int64), np.empty(0, dtype=np.int32)

    mx, my = splats.mean2d[:, 0], splats.mean2d[:, 1]
    r = splats.radius_bin
    # pixel index range whose centers fall inside the bounding square
    x0 = np.ceil(mx - r - 0.5)
    x1 = np.floor(mx + r - 0.5)
    y0 = np.ceil(my - r - 0.5)
    y1 = np.floor(my + r - 0.5)
    tx0 = np.maximum(np.floor_divide(x0, tile), 0).astype(np.int64)
    tx1 = np.minimum(np.floor_divide(x1, tile), n_tx - 1).astype(np.int64)
    ty0 = np.maximum(np.floor_divide(y0, tile), 0).astype(np.int64)
    ty1 = np.minimum(np.floor_divide(y1, tile), n_ty - 1).astype(np.int64)

    wx = tx1 - tx0 + 1
    wy = ty1 - ty0 + 1
    valid = (wx > 0) & (wy > 0)
    cnt = np.where(valid, wx * wy, 0)
    total = int(cnt.sum())
    if total == 0:
        return np.zeros(n_tiles + 1, dtype=np.int64), np.empty(0, dtype=np.int32)

    splat_ids = np.repeat(np.arange(m, dtype=np.int32), cnt)
    offsets = np.cumsum(cnt) - cnt
    local = np.arange(total, dtype=np.int64) - np.repeat(offsets, cnt)
    wxr = np.repeat(np.where(valid, wx, 1), cnt)
    tx = np.repeat(tx0, cnt) + local % wxr
    ty = np.repeat(ty0, cnt) + local // wxr
    tile_id = ty * n_tx + tx

    order = np.argsort(tile_id, kind="stable")
    tile_ids = splat_ids[order]
    counts = np.bincount(tile_id, minlength=n_tiles)
    tile_starts = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(counts, out=tile_starts[1:])
    return tile_starts, np.ascontiguousarray(tile_ids)
