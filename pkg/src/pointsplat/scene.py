"""Scene-level domain types: cameras, point maps, image buffers, view graphs.

Conventions (also documented in the README):
  * Right-handed camera frame, z points forward (into the scene).
  * Camera.pose is world-to-camera: x_cam = R @ x_world + t.
  * Pixel (ix, iy) samples the image plane at integer coordinates, so the
    default principal point is exactly (W/2, H/2) and the ray through pixel
    (ix, iy) is ((ix - cx)/f, (iy - cy)/f, 1).
  * Images are H x W x 3 float64 in [0, 1]; depth maps H x W float64 >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, InvalidGraphError


def _as_f64(a, shape=None, name="array"):
    out = np.asarray(a, dtype=np.float64)
    if shape is not None and out.shape != shape:
        raise InvalidParameterError(f"{name} must have shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InvalidParameterError(f"{name} contains non-finite values")
    return out


def validate_image(image) -> np.ndarray:
    """Check an RGB buffer: H x W x 3, finite, values in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidParameterError(f"image must be HxWx3, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InvalidParameterError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise InvalidParameterError("image values must lie in [0, 1]")
    return img


def validate_depth(depth) -> np.ndarray:
    """Check a depth buffer: H x W, finite, non-negative."""
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise InvalidParameterError(f"depth must be HxW, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise InvalidParameterError("depth contains non-finite values")
    if d.min() < 0.0:
        raise InvalidParameterError("depth values must be non-negative")
    return d


@dataclass
class Camera:
    """Pinhole camera: shared focal, principal point, resolution, rigid pose.

    `rotation` and `translation` form the world-to-camera map. The rotation
    must be orthonormal with determinant +1.
    """

    focal: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray
    principal_point: np.ndarray | None = None

    def __post_init__(self):
        self.focal = float(self.focal)
        self.width = int(self.width)
        self.height = int(self.height)
        if not np.isfinite(self.focal) or self.focal <= 0:
            raise InvalidParameterError(f"focal must be positive, got {self.focal}")
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError("width and height must be >= 1")
        self.rotation = _as_f64(self.rotation, (3, 3), "rotation")
        self.translation = _as_f64(self.translation, (3,), "translation")
        if self.principal_point is None:
            self.principal_point = np.array(
                [self.width / 2.0, self.height / 2.0], dtype=np.float64
            )
        else:
            self.principal_point = _as_f64(self.principal_point, (2,), "principal_point")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-8 or np.linalg.det(self.rotation) < 0:
            raise InvalidParameterError("pose rotation must be orthonormal with det +1")

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def pixel_rays(self) -> np.ndarray:
        """H x W x 3 unit-depth rays ((ix-cx)/f, (iy-cy)/f, 1) in camera frame."""
        cx, cy = self.principal_point
        ix = np.arange(self.width, dtype=np.float64)
        iy = np.arange(self.height, dtype=np.float64)
        gx, gy = np.meshgrid((ix - cx) / self.focal, (iy - cy) / self.focal)
        return np.stack([gx, gy, np.ones_like(gx)], axis=-1)

    @staticmethod
    def look_at(
        eye, target, up, focal: float, width: int, height: int
    ) -> "Camera":
        """Build a world-to-camera pose with +z looking from eye toward target."""
        eye = _as_f64(eye, (3,), "eye")
        target = _as_f64(target, (3,), "target")
        up = _as_f64(up, (3,), "up")
        fwd = target - eye
        n = np.linalg.norm(fwd)
        if n < 1e-12:
            raise InvalidParameterError("eye and target coincide")
        fwd = fwd / n
        right = np.cross(fwd, up)
        n = np.linalg.norm(right)
        if n < 1e-12:
            raise InvalidParameterError("up is parallel to the view direction")
        right = right / n
        down = np.cross(fwd, right)
        r = np.stack([right, down, fwd], axis=0)
        return Camera(focal, width, height, r, -r @ eye)


@dataclass
class PointMap:
    """Per-pixel 3D points with confidences, optionally with pixel colors."""

    points: np.ndarray
    confidence: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise InvalidParameterError(
                f"points must be HxWx3, got {self.points.shape}"
            )
        if self.confidence.shape != self.points.shape[:2]:
            raise InvalidParameterError(
                "confidence grid must match points grid "
                f"({self.confidence.shape} vs {self.points.shape[:2]})"
            )
        if not np.all(np.isfinite(self.points)):
            raise InvalidParameterError("point map contains non-finite points")
        if not np.all(np.isfinite(self.confidence)) or self.confidence.min() < 0:
            raise InvalidParameterError("confidences must be finite and >= 0")
        if self.colors is not None:
            self.colors = validate_image(self.colors)
            if self.colors.shape[:2] != self.points.shape[:2]:
                raise InvalidParameterError("colors grid must match points grid")

    @property
    def shape(self):
        return self.points.shape[:2]


@dataclass
class GraphEdge:
    """One ordered view pair. Both point maps live in the reference view's frame."""

    ref_view: int
    src_view: int
    ref_map: PointMap
    src_map: PointMap

    def views(self):
        return (self.ref_view, self.src_view)


@dataclass
class ConnectivityGraph:
    """Views plus the pairwise point maps that tie them together."""

    num_views: int
    edges: list[GraphEdge] = field(default_factory=list)

    def __post_init__(self):
        if self.num_views < 1:
            raise InvalidGraphError("graph needs at least one view")
        for e in self.edges:
            if e.ref_view == e.src_view:
                raise InvalidGraphError(f"self-edge on view {e.ref_view}")
            for v in e.views():
                if not 0 <= v < self.num_views:
                    raise InvalidGraphError(f"edge references unknown view {v}")

    def validate_connected(self):
        """Raise InvalidGraphError unless every view is reachable from view 0."""
        adj = [[] for _ in range(self.num_views)]
        for e in self.edges:
            adj[e.ref_view].append(e.src_view)
            adj[e.src_view].append(e.ref_view)
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != self.num_views:
            missing = sorted(set(range(self.num_views)) - seen)
            raise InvalidGraphError(f"graph is disconnected; unreachable views {missing}")
