"""Explicit scene representation: anisotropic 3D Gaussians.

Each primitive stores a mean, per-axis log standard deviations, a unit
quaternion, spherical-harmonics color coefficients, and an opacity logit.
Covariance is realized as R S S^T R^T from the stored factors, so it is
positive definite by construction; opacity is realized through a logistic
sigmoid, so it stays strictly inside (0, 1).

Scene file format (line-oriented UTF-8 text)::

    lowsplat-scene v1 sh_degree=<L> count=<N>
    <mean x y z> <log_scale x y z> <quat w x y z> <opacity_logit> <sh ...>

with 3*(L+1)^2 SH values per line, coefficient-major (r g b per coefficient),
all floats printed with 17 significant digits so round-trips are bit-exact.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, InvalidConfigError, MissingInputError

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)

MAX_SH_DEGREE = 2
QUAT_NORM_TOL = 1e-9

_HEADER_PREFIX = "lowsplat-scene v1"


def n_sh_coeffs(degree: int) -> int:
    if degree not in (0, 1, 2):
        raise InvalidConfigError(f"sh degree must be 0, 1, or 2, got {degree}")
    return (degree + 1) ** 2


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise InvalidConfigError("zero-norm quaternion")
    return q / n


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions (w, x, y, z); batched over
    leading axes."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    r[..., 0, 0] = 1 - 2 * (y * y + z * z)
    r[..., 0, 1] = 2 * (x * y - w * z)
    r[..., 0, 2] = 2 * (x * z + w * y)
    r[..., 1, 0] = 2 * (x * y + w * z)
    r[..., 1, 1] = 1 - 2 * (x * x + z * z)
    r[..., 1, 2] = 2 * (y * z - w * x)
    r[..., 2, 0] = 2 * (x * z - w * y)
    r[..., 2, 1] = 2 * (y * z + w * x)
    r[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return r


def covariance_from_scale_rotation(log_scale, rotation) -> np.ndarray:
    """Realized covariance R S S^T R^T with S = diag(exp(log_scale)).

    Symmetric positive definite for any finite inputs; eigenvalues are
    exactly exp(2 * log_scale) up to rounding.
    """
    ls = np.asarray(log_scale, dtype=np.float64)
    if not np.all(np.isfinite(ls)):
        raise InvalidConfigError("non-finite log_scale")
    q = np.asarray(rotation, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise InvalidConfigError("non-finite quaternion")
    r = quat_to_rotmat(quat_normalize(q))
    m = r * np.exp(ls)[..., None, :]
    return m @ np.swapaxes(m, -1, -2)


def squash_opacity(logit) -> np.ndarray | float:
    """Logistic sigmoid; strictly monotone, never exactly 0 or 1 for finite
    logits."""
    x = np.asarray(logit, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return float(out) if out.ndim == 0 else out


def unsquash_opacity(alpha) -> np.ndarray | float:
    a = np.asarray(alpha, dtype=np.float64)
    out = np.log(a) - np.log1p(-a)
    return float(out) if out.ndim == 0 else out


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Real spherical-harmonics basis values at unit directions.

    ``dirs`` is (..., 3); returns (..., (degree+1)^2) ordered by band.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    n = n_sh_coeffs(degree)
    out = np.empty(dirs.shape[:-1] + (n,), dtype=np.float64)
    out[..., 0] = SH_C0
    if degree >= 1:
        x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
        out[..., 1] = -SH_C1 * y
        out[..., 2] = SH_C1 * z
        out[..., 3] = -SH_C1 * x
    if degree >= 2:
        out[..., 4] = SH_C2[0] * x * y
        out[..., 5] = SH_C2[1] * y * z
        out[..., 6] = SH_C2[2] * (3.0 * z * z - 1.0)
        out[..., 7] = SH_C2[3] * x * z
        out[..., 8] = SH_C2[4] * (x * x - y * y)
    return out


def sh_basis_grad(dirs: np.ndarray, degree: int) -> np.ndarray:
    """d basis / d direction, shape (..., n_coeffs, 3)."""
    dirs = np.asarray(dirs, dtype=np.float64)
    n = n_sh_coeffs(degree)
    g = np.zeros(dirs.shape[:-1] + (n, 3), dtype=np.float64)
    if degree >= 1:
        x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
        g[..., 1, 1] = -SH_C1
        g[..., 2, 2] = SH_C1
        g[..., 3, 0] = -SH_C1
    if degree >= 2:
        g[..., 4, 0] = SH_C2[0] * y
        g[..., 4, 1] = SH_C2[0] * x
        g[..., 5, 1] = SH_C2[1] * z
        g[..., 5, 2] = SH_C2[1] * y
        g[..., 6, 2] = SH_C2[2] * 6.0 * z
        g[..., 7, 0] = SH_C2[3] * z
        g[..., 7, 2] = SH_C2[3] * x
        g[..., 8, 0] = SH_C2[4] * 2.0 * x
        g[..., 8, 1] = SH_C2[4] * -2.0 * y
    return g


def eval_sh(sh: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """View-dependent RGB from SH coefficients at a unit view direction.

    ``sh`` has shape (n_coeffs, 3), coefficient-major. The raw basis value is
    shifted by +0.5 and clipped to [0, 1]: a zero coefficient block renders
    mid-gray.
    """
    sh = np.asarray(sh, dtype=np.float64)
    d = np.asarray(view_dir, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise InvalidConfigError("view direction must be unit length")
    degree = int(round(math.sqrt(sh.shape[0]))) - 1
    if (degree + 1) ** 2 != sh.shape[0]:
        raise InvalidConfigError(f"sh block length {sh.shape[0]} is not (L+1)^2")
    basis = sh_basis(d, degree)
    return np.clip(basis @ sh + 0.5, 0.0, 1.0)


@dataclass
class GaussianPrimitive:
    """One scene element; a per-index view into or source for a scene."""

    mean: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    sh: np.ndarray
    opacity_logit: float

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64).reshape(3)
        self.rotation = quat_normalize(np.asarray(self.rotation, dtype=np.float64).reshape(4))
        self.sh = np.asarray(self.sh, dtype=np.float64)
        if self.sh.ndim != 2 or self.sh.shape[1] != 3:
            raise InvalidConfigError(f"sh block must be (n_coeffs, 3), got {self.sh.shape}")
        n_sh_coeffs(self.sh_degree)

    @property
    def sh_degree(self) -> int:
        return int(round(math.sqrt(self.sh.shape[0]))) - 1

    @property
    def covariance(self) -> np.ndarray:
        return covariance_from_scale_rotation(self.log_scale, self.rotation)

    @property
    def opacity(self) -> float:
        return float(squash_opacity(self.opacity_logit))


@dataclass
class GaussianScene:
    """Struct-of-arrays container for a set of Gaussian primitives."""

    means: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    sh: np.ndarray
    opacity_logits: np.ndarray
    sh_degree: int = field(default=1)

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = len(self.means)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.rotations = quat_normalize(
            np.ascontiguousarray(self.rotations, dtype=np.float64).reshape(n, 4)
        ) if n else np.empty((0, 4))
        k = n_sh_coeffs(self.sh_degree)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float64).reshape(n, k, 3)
        self.opacity_logits = np.ascontiguousarray(
            self.opacity_logits, dtype=np.float64
        ).reshape(n)

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            mean=self.means[i].copy(),
            log_scale=self.log_scales[i].copy(),
            rotation=self.rotations[i].copy(),
            sh=self.sh[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
        )

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            means=self.means.copy(),
            log_scales=self.log_scales.copy(),
            rotations=self.rotations.copy(),
            sh=self.sh.copy(),
            opacity_logits=self.opacity_logits.copy(),
            sh_degree=self.sh_degree,
        )

    @classmethod
    def empty(cls, sh_degree: int = 1) -> "GaussianScene":
        k = n_sh_coeffs(sh_degree)
        return cls(
            means=np.empty((0, 3)),
            log_scales=np.empty((0, 3)),
            rotations=np.empty((0, 4)),
            sh=np.empty((0, k, 3)),
            opacity_logits=np.empty((0,)),
            sh_degree=sh_degree,
        )

    @classmethod
    def from_primitives(cls, prims, sh_degree: int | None = None) -> "GaussianScene":
        prims = list(prims)
        if sh_degree is None:
            if not prims:
                raise InvalidConfigError("sh_degree required for an empty primitive list")
            sh_degree = prims[0].sh_degree
        for p in prims:
            if p.sh_degree != sh_degree:
                raise DataFormatError(
                    f"primitive sh degree {p.sh_degree} != scene degree {sh_degree}"
                )
        k = n_sh_coeffs(sh_degree)
        return cls(
            means=np.array([p.mean for p in prims]).reshape(-1, 3),
            log_scales=np.array([p.log_scale for p in prims]).reshape(-1, 3),
            rotations=np.array([p.rotation for p in prims]).reshape(-1, 4),
            sh=np.array([p.sh for p in prims]).reshape(-1, k, 3),
            opacity_logits=np.array([p.opacity_logit for p in prims]).reshape(-1),
            sh_degree=sh_degree,
        )

    @staticmethod
    def concatenate(scenes) -> "GaussianScene":
        scenes = list(scenes)
        deg = scenes[0].sh_degree
        if any(s.sh_degree != deg for s in scenes):
            raise DataFormatError("cannot concatenate scenes with different sh degrees")
        return GaussianScene(
            means=np.concatenate([s.means for s in scenes]),
            log_scales=np.concatenate([s.log_scales for s in scenes]),
            rotations=np.concatenate([s.rotations for s in scenes]),
            sh=np.concatenate([s.sh for s in scenes]),
            opacity_logits=np.concatenate([s.opacity_logits for s in scenes]),
            sh_degree=deg,
        )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def scene_write(scene: GaussianScene, path) -> None:
    """Write the line-oriented scene file; lossless for float64 fields."""
    lines = [f"{_HEADER_PREFIX} sh_degree={scene.sh_degree} count={len(scene)}"]
    for i in range(len(scene)):
        vals = np.concatenate([
            scene.means[i],
            scene.log_scales[i],
            scene.rotations[i],
            [scene.opacity_logits[i]],
            scene.sh[i].reshape(-1),
        ])
        lines.append(" ".join(_fmt(v) for v in vals))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def scene_read(path) -> GaussianScene:
    """Read a scene file; renormalizes non-unit quaternions with a warning."""
    try:
        f = open(path, "r", encoding="utf-8")
    except FileNotFoundError as e:
        raise MissingInputError(f"scene file not found: {path}") from e
    with f:
        header = f.readline().strip()
        if not header.startswith(_HEADER_PREFIX):
            raise DataFormatError(f"{path}: bad scene header {header!r}")
        try:
            fields = dict(tok.split("=") for tok in header[len(_HEADER_PREFIX):].split())
            degree = int(fields["sh_degree"])
            count = int(fields["count"])
        except (ValueError, KeyError) as e:
            raise DataFormatError(f"{path}: malformed scene header {header!r}") from e
        k = n_sh_coeffs(degree)
        n_vals = 3 + 3 + 4 + 1 + 3 * k
        rows = np.empty((count, n_vals), dtype=np.float64)
        for i in range(count):
            line = f.readline()
            if not line:
                raise DataFormatError(f"{path}: expected {count} primitives, got {i}")
            parts = line.split()
            if len(parts) != n_vals:
                raise DataFormatError(
                    f"{path}: primitive {i} has {len(parts)} values, "
                    f"expected {n_vals} for sh_degree={degree}"
                )
            rows[i] = [float(p) for p in parts]
    quats = rows[:, 6:10]
    if count:
        norms = np.linalg.norm(quats, axis=1)
        if np.any(np.abs(norms - 1.0) > QUAT_NORM_TOL):
            warnings.warn(f"{path}: non-unit quaternions renormalized on read")
    return GaussianScene(
        means=rows[:, 0:3],
        log_scales=rows[:, 3:6],
        rotations=quats if count else np.empty((0, 4)),
        sh=rows[:, 11:].reshape(count, k, 3),
        opacity_logits=rows[:, 10],
        sh_degree=degree,
    )
