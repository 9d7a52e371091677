"""Differentiable forward rendering of color and depth, plus the backward pass.

The compositor follows front-to-back alpha blending: primitives are sorted by
camera-frame depth (stable, ties broken by primitive index), each contributes
sigma_i = min(opacity_i * G2d_i(pixel), sigma_max) inside its 3-standard-
deviation bounding rectangle, and accumulation stops once transmittance drops
below `transmittance_min`. Depth is the same weighted sum over per-primitive
camera z values, left unnormalized.

Implementation notes, load-bearing for the tests:
  * Every matrix product on the projection path is unrolled into scalar
    expressions. Elementwise torch ops are value-deterministic regardless of
    tensor shape, so a single projected primitive is bit-identical whether it
    was projected alone or as part of a batch, and the renderer can be
    compared bit-for-bit against a naive per-pixel compositor.
  * Per-pixel sums/products use cumsum/cumprod along the primitive axis,
    which torch evaluates in strict sequential order.
  * Early termination is applied through a mask derived from the plain
    running transmittance; a primitive is skipped at a pixel iff the
    sequential compositor would have stopped there (the running product only
    ever decreases, so the first sub-threshold prefix freezes the pixel).

The backward pass re-walks the same graph under autograd and contracts it
with caller-supplied gradient images; culled primitives get zero gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidParameterError
from .gaussians import GaussianCloud, GaussianPrimitive, sh_basis_t
from .scene import Camera


@dataclass
class RenderSettings:
    """Rasterizer knobs; defaults match the training pipeline."""

    z_near: float = 0.01
    lowpass: float = 0.3  # 2D covariance dilation, px^2
    filter_scale: float = 0.2  # 3D smoothing filter scale; 0 disables
    sigma_max: float = 0.999
    transmittance_min: float = 1e-4
    radius_sigmas: float = 3.0


@dataclass
class ProjectedGaussian:
    """A primitive after perspective projection onto one camera."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    view_depth: float
    rgb: np.ndarray
    opacity: float


@dataclass
class RenderOutput:
    color: np.ndarray  # H x W x 3, clamped to [0, 1]
    depth: np.ndarray  # H x W, unnormalized weighted sum
    alpha: np.ndarray  # H x W accumulated opacity
    all_culled: bool = False
    visible_count: int = 0


@dataclass
class GaussianGradients:
    """d(loss)/d(raw parameter) for every primitive in cloud order."""

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh_coeffs: np.ndarray


def _camera_tensors(camera: Camera):
    r = torch.from_numpy(np.ascontiguousarray(camera.rotation))
    t = torch.from_numpy(np.ascontiguousarray(camera.translation))
    return r, t


def _project(params, camera: Camera, settings: RenderSettings):
    """Project all primitives; returns per-primitive tensors plus a keep mask.

    `params` maps name -> torch tensor (positions (N,3), rotations (N,4),
    log_scales (N,3), opacity_logits (N,), sh_coeffs (N,K,3)).
    Products are unrolled; see module docstring.
    """
    pos = params["positions"]
    r, t = _camera_tensors(camera)
    px, py, pz = pos[:, 0], pos[:, 1], pos[:, 2]
    tx = px * r[0, 0] + py * r[0, 1] + pz * r[0, 2] + t[0]
    ty = px * r[1, 0] + py * r[1, 1] + pz * r[1, 2] + t[1]
    tz = px * r[2, 0] + py * r[2, 1] + pz * r[2, 2] + t[2]

    keep = (tz > settings.z_near).detach()

    f = camera.focal
    cx, cy = camera.principal_point
    mx = f * (tx / tz) + cx
    my = f * (ty / tz) + cy

    # World covariance M M^T rotated into the camera frame: A = R_wc (R_q S).
    q = params["rotations"]
    qn = q / torch.sqrt(torch.sum(q * q, dim=-1, keepdim=True))
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    s = torch.exp(params["log_scales"])
    s0, s1, s2 = s[:, 0], s[:, 1], s[:, 2]
    m00 = (1 - 2 * (y * y + z * z)) * s0
    m01 = (2 * (x * y - w * z)) * s1
    m02 = (2 * (x * z + w * y)) * s2
    m10 = (2 * (x * y + w * z)) * s0
    m11 = (1 - 2 * (x * x + z * z)) * s1
    m12 = (2 * (y * z - w * x)) * s2
    m20 = (2 * (x * z - w * y)) * s0
    m21 = (2 * (y * z + w * x)) * s1
    m22 = (1 - 2 * (x * x + y * y)) * s2

    a00 = r[0, 0] * m00 + r[0, 1] * m10 + r[0, 2] * m20
    a01 = r[0, 0] * m01 + r[0, 1] * m11 + r[0, 2] * m21
    a02 = r[0, 0] * m02 + r[0, 1] * m12 + r[0, 2] * m22
    a10 = r[1, 0] * m00 + r[1, 1] * m10 + r[1, 2] * m20
    a11 = r[1, 0] * m01 + r[1, 1] * m11 + r[1, 2] * m21
    a12 = r[1, 0] * m02 + r[1, 1] * m12 + r[1, 2] * m22
    a20 = r[2, 0] * m00 + r[2, 1] * m10 + r[2, 2] * m20
    a21 = r[2, 0] * m01 + r[2, 1] * m11 + r[2, 2] * m21
    a22 = r[2, 0] * m02 + r[2, 1] * m12 + r[2, 2] * m22

    v00 = a00 * a00 + a01 * a01 + a02 * a02
    v01 = a00 * a10 + a01 * a11 + a02 * a12
    v02 = a00 * a20 + a01 * a21 + a02 * a22
    v11 = a10 * a10 + a11 * a11 + a12 * a12
    v12 = a10 * a20 + a11 * a21 + a12 * a22
    v22 = a20 * a20 + a21 * a21 + a22 * a22

    # Isotropic 3D smoothing filter commutes with the rotation, so it lands
    # on the camera-frame covariance diagonal.
    if settings.filter_scale > 0.0:
        fterm = settings.filter_scale * tz / f
        fsq = fterm * fterm
        v00 = v00 + fsq
        v11 = v11 + fsq
        v22 = v22 + fsq

    # Perspective Jacobian J = [[f/tz, 0, -f tx/tz^2], [0, f/tz, -f ty/tz^2]].
    j00 = f / tz
    j02 = -(f * tx) / (tz * tz)
    j11 = f / tz
    j12 = -(f * ty) / (tz * tz)

    b00 = j00 * v00 + j02 * v02
    b01 = j00 * v01 + j02 * v12
    b02 = j00 * v02 + j02 * v22
    b10 = j11 * v01 + j12 * v02
    b11 = j11 * v11 + j12 * v12
    b12 = j11 * v12 + j12 * v22

    c00 = b00 * j00 + b02 * j02 + settings.lowpass
    c01 = b01 * j11 + b02 * j12
    c11 = b11 * j11 + b12 * j12 + settings.lowpass

    # View-dependent color from the camera-center direction.
    center = torch.from_numpy(np.ascontiguousarray(camera.camera_center()))
    dx = pos[:, 0] - center[0]
    dy = pos[:, 1] - center[1]
    dz = pos[:, 2] - center[2]
    norm = torch.sqrt(dx * dx + dy * dy + dz * dz).clamp_min(1e-12)
    dirs = torch.stack([dx / norm, dy / norm, dz / norm], dim=-1)
    sh = params["sh_coeffs"]
    degree = int(round(np.sqrt(sh.shape[1]))) - 1
    basis = sh_basis_t(dirs, degree)  # (N, K)
    rgb = basis[:, 0:1] * sh[:, 0, :]
    for k in range(1, sh.shape[1]):
        rgb = rgb + basis[:, k : k + 1] * sh[:, k, :]

    opacity = torch.sigmoid(params["opacity_logits"])

    return {
        "keep": keep,
        "mean_x": mx,
        "mean_y": my,
        "depth": tz,
        "c00": c00,
        "c01": c01,
        "c11": c11,
        "rgb": rgb,
        "opacity": opacity,
    }


def _composite(proj, keep_idx, order, height, width, settings: RenderSettings):
    """Front-to-back blending of the kept, depth-sorted primitives."""
    sel = keep_idx[order]
    mx = proj["mean_x"][sel][:, None, None]
    my = proj["mean_y"][sel][:, None, None]
    c00 = proj["c00"][sel][:, None, None]
    c01 = proj["c01"][sel][:, None, None]
    c11 = proj["c11"][sel][:, None, None]
    rgb = proj["rgb"][sel]
    opacity = proj["opacity"][sel][:, None, None]
    depth = proj["depth"][sel][:, None, None]

    xs = torch.arange(width, dtype=torch.float64)[None, None, :]
    ys = torch.arange(height, dtype=torch.float64)[None, :, None]
    dx = xs - mx
    dy = ys - my

    det = c00 * c11 - c01 * c01
    ca = c11 / det
    cb = -c01 / det
    cc = c00 / det
    power = -0.5 * (ca * (dx * dx) + cc * (dy * dy)) - cb * (dx * dy)
    g = torch.exp(power)

    rx = settings.radius_sigmas * torch.sqrt(c00)
    ry = settings.radius_sigmas * torch.sqrt(c11)
    inside = (torch.abs(dx) <= rx) & (torch.abs(dy) <= ry)

    sigma = torch.where(
        inside,
        torch.clamp_max(opacity * g, settings.sigma_max),
        torch.zeros((), dtype=torch.float64),
    )

    n = sigma.shape[0]
    ones = torch.ones((1, height, width), dtype=torch.float64)
    t_raw = torch.cumprod(1.0 - sigma, dim=0)
    t_before_raw = torch.cat([ones, t_raw[:-1]], dim=0)
    active = (t_before_raw >= settings.transmittance_min).to(torch.float64)

    sigma_eff = sigma * active
    t_eff = torch.cumprod(1.0 - sigma_eff, dim=0)
    t_before = torch.cat([ones, t_eff[:-1]], dim=0)
    weight = t_before * sigma_eff

    channels = [
        torch.cumsum(weight * rgb[:, ch][:, None, None], dim=0)[-1] for ch in range(3)
    ]
    color = torch.clamp(torch.stack(channels, dim=-1), 0.0, 1.0)
    depth_img = torch.cumsum(weight * depth, dim=0)[-1]
    alpha_img = torch.cumsum(weight, dim=0)[-1]
    return color, depth_img, alpha_img


def _render_graph(params, camera: Camera, settings: RenderSettings):
    proj = _project(params, camera, settings)
    keep_idx = torch.nonzero(proj["keep"], as_tuple=False).reshape(-1)
    if keep_idx.numel() == 0:
        return None, 0
    depth_kept = proj["depth"].detach()[keep_idx]
    order = torch.argsort(depth_kept, stable=True)
    color, depth_img, alpha_img = _composite(
        proj, keep_idx, order, camera.height, camera.width, settings
    )
    return (color, depth_img, alpha_img), int(keep_idx.numel())


def _cloud_tensors(cloud: GaussianCloud, requires_grad: bool = False):
    params = {
        "positions": torch.from_numpy(cloud.positions.copy()),
        "rotations": torch.from_numpy(cloud.rotations.copy()),
        "log_scales": torch.from_numpy(cloud.log_scales.copy()),
        "opacity_logits": torch.from_numpy(cloud.opacity_logits.copy()),
        "sh_coeffs": torch.from_numpy(cloud.sh_coeffs.copy()),
    }
    if requires_grad:
        for v in params.values():
            v.requires_grad_(True)
    return params


def project_gaussian(
    primitive: GaussianPrimitive, camera: Camera, settings: RenderSettings | None = None
) -> ProjectedGaussian | None:
    """Project one primitive; returns None when culled by the near plane."""
    settings = settings or RenderSettings()
    cloud = GaussianCloud.from_primitives([primitive])
    with torch.no_grad():
        proj = _project(_cloud_tensors(cloud), camera, settings)
    if not bool(proj["keep"][0]):
        return None
    mean2d = np.array([float(proj["mean_x"][0]), float(proj["mean_y"][0])])
    c00, c01, c11 = (float(proj[k][0]) for k in ("c00", "c01", "c11"))
    return ProjectedGaussian(
        mean2d=mean2d,
        cov2d=np.array([[c00, c01], [c01, c11]]),
        view_depth=float(proj["depth"][0]),
        rgb=proj["rgb"][0].numpy().copy(),
        opacity=float(proj["opacity"][0]),
    )


def apply_3d_smoothing_filter(
    cov3d: np.ndarray, view_depth: float, focal: float, filter_scale: float = 0.2
) -> np.ndarray:
    """Dilate a world covariance by the depth- and focal-dependent isotropic term."""
    cov = np.asarray(cov3d, dtype=np.float64)
    if cov.shape != (3, 3):
        raise InvalidParameterError("cov3d must be 3x3")
    if view_depth <= 0 or focal <= 0:
        raise InvalidParameterError("view_depth and focal must be positive")
    fterm = filter_scale * view_depth / focal
    return cov + (fterm * fterm) * np.eye(3)


def render(
    cloud: GaussianCloud, camera: Camera, settings: RenderSettings | None = None
) -> RenderOutput:
    """Render color, depth, and accumulated alpha for one camera."""
    if len(cloud) == 0:
        raise InvalidParameterError("cannot render an empty cloud")
    settings = settings or RenderSettings()
    with torch.no_grad():
        out, visible = _render_graph(_cloud_tensors(cloud), camera, settings)
    h, w = camera.height, camera.width
    if out is None:
        return RenderOutput(
            color=np.zeros((h, w, 3)),
            depth=np.zeros((h, w)),
            alpha=np.zeros((h, w)),
            all_culled=True,
            visible_count=0,
        )
    color, depth, alpha = out
    return RenderOutput(
        color=color.numpy(),
        depth=depth.numpy(),
        alpha=alpha.numpy(),
        all_culled=False,
        visible_count=visible,
    )


def render_backward(
    cloud: GaussianCloud,
    camera: Camera,
    grad_color: np.ndarray,
    grad_depth: np.ndarray,
    settings: RenderSettings | None = None,
) -> GaussianGradients:
    """Pull gradient images back to per-primitive parameter gradients.

    `grad_color` (H,W,3) and `grad_depth` (H,W) are d(loss)/d(rendered color)
    and d(loss)/d(rendered depth). The forward pass is recomputed under
    autograd; culled primitives receive zero gradients.
    """
    settings = settings or RenderSettings()
    gc = np.asarray(grad_color, dtype=np.float64)
    gd = np.asarray(grad_depth, dtype=np.float64)
    h, w = camera.height, camera.width
    if gc.shape != (h, w, 3):
        raise InvalidParameterError(
            f"grad_color must be ({h}, {w}, 3), got {gc.shape}"
        )
    if gd.shape != (h, w):
        raise InvalidParameterError(f"grad_depth must be ({h}, {w}), got {gd.shape}")
    if not (np.all(np.isfinite(gc)) and np.all(np.isfinite(gd))):
        raise InvalidParameterError("upstream gradients contain non-finite values")

    params = _cloud_tensors(cloud, requires_grad=True)
    out, _ = _render_graph(params, camera, settings)
    names = ("positions", "rotations", "log_scales", "opacity_logits", "sh_coeffs")
    if out is None:
        grads = [torch.zeros_like(params[n]) for n in names]
    else:
        color, depth_img, _ = out
        total = (color * torch.from_numpy(gc)).sum() + (
            depth_img * torch.from_numpy(gd)
        ).sum()
        grads = torch.autograd.grad(
            total, [params[n] for n in names], allow_unused=True
        )
        grads = [
            torch.zeros_like(params[n]) if g is None else g
            for n, g in zip(names, grads)
        ]
    return GaussianGradients(
        positions=grads[0].numpy(),
        rotations=grads[1].numpy(),
        log_scales=grads[2].numpy(),
        opacity_logits=grads[3].numpy(),
        sh_coeffs=grads[4].numpy(),
    )
