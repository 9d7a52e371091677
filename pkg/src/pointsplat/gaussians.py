"""Gaussian primitives: parameterization, covariance, and SH color.

A primitive carries its covariance factored as unit quaternion + per-axis
log standard deviations (7 numbers), opacity as a logit, and color as real
spherical-harmonic coefficients per channel. Activations (exp, sigmoid,
quaternion normalization) keep every optimizer iterate valid.

Quaternions are (w, x, y, z). SH coefficient slot k matches the real basis
order used throughout the splatting literature (degree-major, l from 0 to 3).

The torch variants (`quat_to_rotation_t`, `covariance_t`, `sh_basis_t`)
mirror the numpy ones expression-for-expression so both produce bit-identical
values; a unit test locks that equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidParameterError

# Real SH normalization constants, degrees 0..3.
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

MAX_SH_DEGREE = 3


def sh_coeff_count(degree: int) -> int:
    return (degree + 1) ** 2


def degree_from_coeff_count(count: int) -> int:
    degree = int(round(np.sqrt(count))) - 1
    if sh_coeff_count(degree) != count or not 0 <= degree <= MAX_SH_DEGREE:
        raise InvalidParameterError(f"{count} is not a valid SH coefficient count")
    return degree


@dataclass
class GaussianPrimitive:
    """One anisotropic Gaussian blob (raw, unactivated parameters)."""

    position: np.ndarray
    rotation: np.ndarray
    log_scales: np.ndarray
    opacity_logit: float
    sh_coeffs: np.ndarray  # (K, 3), channel-last

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64).reshape(3)
        self.opacity_logit = float(self.opacity_logit)
        self.sh_coeffs = np.asarray(self.sh_coeffs, dtype=np.float64)
        if self.sh_coeffs.ndim != 2 or self.sh_coeffs.shape[1] != 3:
            raise InvalidParameterError("sh_coeffs must have shape (K, 3)")
        degree_from_coeff_count(self.sh_coeffs.shape[0])

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)


class GaussianCloud:
    """An ordered set of primitives, stored as arrays for fast rendering.

    Parameter arrays are float64: positions (N,3), rotations (N,4),
    log_scales (N,3), opacity_logits (N,), sh_coeffs (N,K,3).
    """

    def __init__(self, positions, rotations, log_scales, opacity_logits, sh_coeffs):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.rotations = np.ascontiguousarray(rotations, dtype=np.float64)
        self.log_scales = np.ascontiguousarray(log_scales, dtype=np.float64)
        self.opacity_logits = np.ascontiguousarray(opacity_logits, dtype=np.float64)
        self.sh_coeffs = np.ascontiguousarray(sh_coeffs, dtype=np.float64)
        n = self.positions.shape[0]
        if self.positions.shape != (n, 3):
            raise InvalidParameterError("positions must be (N, 3)")
        if self.rotations.shape != (n, 4):
            raise InvalidParameterError("rotations must be (N, 4)")
        if self.log_scales.shape != (n, 3):
            raise InvalidParameterError("log_scales must be (N, 3)")
        if self.opacity_logits.shape != (n,):
            raise InvalidParameterError("opacity_logits must be (N,)")
        if self.sh_coeffs.ndim != 3 or self.sh_coeffs.shape[0] != n or self.sh_coeffs.shape[2] != 3:
            raise InvalidParameterError("sh_coeffs must be (N, K, 3)")
        self.sh_degree = degree_from_coeff_count(self.sh_coeffs.shape[1])

    @classmethod
    def from_primitives(cls, primitives: list[GaussianPrimitive]) -> "GaussianCloud":
        if not primitives:
            raise InvalidParameterError("cannot build a cloud from zero primitives")
        k = primitives[0].sh_coeffs.shape[0]
        if any(p.sh_coeffs.shape[0] != k for p in primitives):
            raise InvalidParameterError("all primitives must share one SH degree")
        return cls(
            np.stack([p.position for p in primitives]),
            np.stack([p.rotation for p in primitives]),
            np.stack([p.log_scales for p in primitives]),
            np.array([p.opacity_logit for p in primitives]),
            np.stack([p.sh_coeffs for p in primitives]),
        )

    def primitive(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            self.positions[i],
            self.rotations[i],
            self.log_scales[i],
            self.opacity_logits[i],
            self.sh_coeffs[i],
        )

    @property
    def primitives(self) -> list[GaussianPrimitive]:
        return [self.primitive(i) for i in range(len(self))]

    def __len__(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            self.positions.copy(),
            self.rotations.copy(),
            self.log_scales.copy(),
            self.opacity_logits.copy(),
            self.sh_coeffs.copy(),
        )

    def normalize_rotations(self):
        """Renormalize quaternions in place; exact-unit rows are left untouched."""
        norms = np.sqrt(np.sum(self.rotations * self.rotations, axis=1))
        if np.any(norms < 1e-12):
            raise InvalidParameterError("zero-norm quaternion")
        off = norms != 1.0
        self.rotations[off] = self.rotations[off] / norms[off, None]


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions, batched (..., 4) -> (..., 3, 3)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r00 = 1 - 2 * (y * y + z * z)
    r01 = 2 * (x * y - w * z)
    r02 = 2 * (x * z + w * y)
    r10 = 2 * (x * y + w * z)
    r11 = 1 - 2 * (x * x + z * z)
    r12 = 2 * (y * z - w * x)
    r20 = 2 * (x * z - w * y)
    r21 = 2 * (y * z + w * x)
    r22 = 1 - 2 * (x * x + y * y)
    rows = [
        np.stack([r00, r01, r02], axis=-1),
        np.stack([r10, r11, r12], axis=-1),
        np.stack([r20, r21, r22], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def quat_to_rotation_t(q: torch.Tensor) -> torch.Tensor:
    """Torch twin of quat_to_rotation (same expressions, autograd-friendly)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    r00 = 1 - 2 * (y * y + z * z)
    r01 = 2 * (x * y - w * z)
    r02 = 2 * (x * z + w * y)
    r10 = 2 * (x * y + w * z)
    r11 = 1 - 2 * (x * x + z * z)
    r12 = 2 * (y * z - w * x)
    r20 = 2 * (x * z - w * y)
    r21 = 2 * (y * z + w * x)
    r22 = 1 - 2 * (x * x + y * y)
    rows = [
        torch.stack([r00, r01, r02], dim=-1),
        torch.stack([r10, r11, r12], dim=-1),
        torch.stack([r20, r21, r22], dim=-1),
    ]
    return torch.stack(rows, dim=-2)


def covariance_from_params(rotation, log_scales) -> np.ndarray:
    """3x3 covariance R @ diag(exp(s))^2 @ R^T from quaternion + log scales.

    The quaternion must be within 1e-6 of unit norm; it is renormalized before
    use so q and -q give the same matrix and the result is always symmetric
    positive-definite.
    """
    q = np.asarray(rotation, dtype=np.float64).reshape(4)
    s = np.asarray(log_scales, dtype=np.float64).reshape(3)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(s))):
        raise InvalidParameterError("non-finite covariance parameters")
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > 1e-6:
        raise InvalidParameterError(f"quaternion norm {norm} is not within 1e-6 of 1")
    r = quat_to_rotation(q / norm)
    m = r * np.exp(s)[None, :]
    return m @ m.T


def covariance_t(rotations: torch.Tensor, log_scales: torch.Tensor) -> torch.Tensor:
    """Batched torch covariance (N,4),(N,3) -> (N,3,3); normalizes quaternions."""
    q = rotations / torch.sqrt(torch.sum(rotations * rotations, dim=-1, keepdim=True))
    r = quat_to_rotation_t(q)
    m = r * torch.exp(log_scales)[:, None, :]
    return m @ m.transpose(-1, -2)


def evaluate_gaussian(primitive: GaussianPrimitive, point) -> float:
    """Unnormalized density exp(-0.5 (p-mu)^T Sigma^-1 (p-mu)) in (0, 1]."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise InvalidParameterError("non-finite evaluation point")
    cov = covariance_from_params(primitive.rotation, primitive.log_scales)
    d = p - primitive.position
    maha = d @ np.linalg.solve(cov, d)
    return float(np.exp(-0.5 * maha))


def sh_basis(directions: np.ndarray, degree: int) -> np.ndarray:
    """Real SH basis values for unit directions, (..., 3) -> (..., (deg+1)^2)."""
    if not 0 <= degree <= MAX_SH_DEGREE:
        raise InvalidParameterError(f"SH degree must be in [0, {MAX_SH_DEGREE}]")
    d = np.asarray(directions, dtype=np.float64)
    out = np.empty(d.shape[:-1] + (sh_coeff_count(degree),), dtype=np.float64)
    out[..., 0] = SH_C0
    if degree >= 1:
        x, y, z = d[..., 0], d[..., 1], d[..., 2]
        out[..., 1] = -SH_C1 * y
        out[..., 2] = SH_C1 * z
        out[..., 3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        out[..., 4] = SH_C2[0] * xy
        out[..., 5] = SH_C2[1] * yz
        out[..., 6] = SH_C2[2] * (2.0 * zz - xx - yy)
        out[..., 7] = SH_C2[3] * xz
        out[..., 8] = SH_C2[4] * (xx - yy)
    if degree >= 3:
        out[..., 9] = SH_C3[0] * y * (3.0 * xx - yy)
        out[..., 10] = SH_C3[1] * xy * z
        out[..., 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
        out[..., 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        out[..., 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
        out[..., 14] = SH_C3[5] * z * (xx - yy)
        out[..., 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out


def sh_basis_t(directions: torch.Tensor, degree: int) -> torch.Tensor:
    """Torch twin of sh_basis."""
    cols = [torch.full(directions.shape[:-1], SH_C0, dtype=directions.dtype)]
    if degree >= 1:
        x, y, z = directions[..., 0], directions[..., 1], directions[..., 2]
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        cols += [
            SH_C2[0] * xy,
            SH_C2[1] * yz,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * xz,
            SH_C2[4] * (xx - yy),
        ]
    if degree >= 3:
        cols += [
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * xy * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3.0 * yy),
        ]
    return torch.stack(cols, dim=-1)


def sh_to_color(sh_coeffs: np.ndarray, view_direction) -> np.ndarray:
    """Evaluate per-channel SH color for one unit view direction.

    Returns the raw linear combination; values may leave [0, 1] and are only
    clamped when composited into an image.
    """
    coeffs = np.asarray(sh_coeffs, dtype=np.float64)
    if coeffs.ndim != 2 or coeffs.shape[1] != 3:
        raise InvalidParameterError("sh_coeffs must have shape (K, 3)")
    degree = degree_from_coeff_count(coeffs.shape[0])
    d = np.asarray(view_direction, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise InvalidParameterError("view_direction must be unit-norm")
    basis = sh_basis(d, degree)
    return basis @ coeffs


def color_to_sh_dc(color) -> np.ndarray:
    """Degree-0 coefficients that reproduce `color` under sh_to_color."""
    return np.asarray(color, dtype=np.float64) / SH_C0
