"""Software depth rasterizer, back-projection and depth image files"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import DatasetIOError, EmptyDepthImageError
from models.camera import CameraIntrinsics, DepthImage
from models.geometry import OrientedPointCloud, RigidTransform, TriangleMesh
from services.geometry import estimate_normals

logger = logging.getLogger(__name__)

NEAR_PLANE = 1e-4
PGM_MAX_MM = 65535
NO_MESH = -1


def clip_near(tri: np.ndarray) -> List[np.ndarray]:
    """Clip a camera-frame triangle to z >= NEAR_PLANE; returns zero, one or two triangles"""
    z = tri[:, 2]
    if np.all(z >= NEAR_PLANE):
        return [tri]
    if np.all(z < NEAR_PLANE):
        return []
    polygon = []
    for i in range(3):
        current, following = tri[i], tri[(i + 1) % 3]
        if current[2] >= NEAR_PLANE:
            polygon.append(current)
        if (current[2] >= NEAR_PLANE) != (following[2] >= NEAR_PLANE):
            t = (NEAR_PLANE - current[2]) / (following[2] - current[2])
            crossing = current + t * (following - current)
            crossing[2] = NEAR_PLANE
            polygon.append(crossing)
    return [np.array([polygon[0], polygon[i], polygon[i + 1]]) for i in range(1, len(polygon) - 1)]


def _rasterize(corners: np.ndarray, cam: CameraIntrinsics, zbuffer: np.ndarray, labels: np.ndarray, mesh_id: int) -> None:
    """Rasterize camera-frame triangles (F, 3, 3) into the buffers in place"""
    for tri in (clipped for face in corners for clipped in clip_near(face)):
        z = tri[:, 2]
        u = cam.fx * tri[:, 0] / z + cam.cx
        v = cam.fy * tri[:, 1] / z + cam.cy

        c0 = max(0, int(np.ceil(u.min())))
        c1 = min(cam.width - 1, int(np.floor(u.max())))
        r0 = max(0, int(np.ceil(v.min())))
        r1 = min(cam.height - 1, int(np.floor(v.max())))
        if c0 > c1 or r0 > r1:
            continue

        denominator = (u[1] - u[0]) * (v[2] - v[0]) - (u[2] - u[0]) * (v[1] - v[0])
        if abs(denominator) < 1e-12:
            continue
        rows, cols = np.mgrid[r0:r1 + 1, c0:c1 + 1]
        du, dv = cols - u[0], rows - v[0]
        b1 = (du * (v[2] - v[0]) - (u[2] - u[0]) * dv) / denominator
        b2 = ((u[1] - u[0]) * dv - du * (v[1] - v[0])) / denominator
        b0 = 1.0 - b1 - b2
        inside = (b0 >= 0) & (b1 >= 0) & (b2 >= 0)
        if not np.any(inside):
            continue

        # perspective-correct: 1/z is affine in screen space
        depth = 1.0 / (b0 / z[0] + b1 / z[1] + b2 / z[2])
        window = zbuffer[r0:r1 + 1, c0:c1 + 1]
        closer = inside & (depth < window)
        window[closer] = depth[closer]
        labels[r0:r1 + 1, c0:c1 + 1][closer] = mesh_id


def render_depth_labels(meshes: Sequence[Tuple[TriangleMesh, RigidTransform]],
                        cam: CameraIntrinsics) -> Tuple[DepthImage, np.ndarray]:
    """Z-buffered depth plus the index of the mesh seen at each pixel (-1 for none)

    Meshes are posed into the camera frame, which looks down +z. Exact depth
    ties keep the earlier mesh.
    """
    zbuffer = np.full((cam.height, cam.width), np.inf)
    labels = np.full((cam.height, cam.width), NO_MESH, dtype=np.int32)
    for mesh_id, (mesh, pose) in enumerate(meshes):
        _rasterize(pose.apply(mesh.corners().reshape(-1, 3)).reshape(-1, 3, 3), cam, zbuffer, labels, mesh_id)
    depth = np.where(np.isfinite(zbuffer), zbuffer, 0.0)
    return DepthImage(depth=depth), labels


def render_depth(meshes: Sequence[Tuple[TriangleMesh, RigidTransform]], cam: CameraIntrinsics) -> DepthImage:
    return render_depth_labels(meshes, cam)[0]


def combine_depth(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Per-pixel nearest valid depth of two renders"""
    first = np.where(first > 0, first, np.inf)
    second = np.where(second > 0, second, np.inf)
    combined = np.minimum(first, second)
    return np.where(np.isfinite(combined), combined, 0.0)


def back_project(img: DepthImage, cam: CameraIntrinsics,
                 pixel_mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Positions (N, 3) and (row, col) pixels of every valid pixel, row-major order"""
    valid = img.valid_mask
    if pixel_mask is not None:
        valid = valid & pixel_mask
    rows, cols = np.nonzero(valid)
    d = img.depth[rows, cols]
    positions = np.stack([(cols - cam.cx) * d / cam.fx, (rows - cam.cy) * d / cam.fy, d], axis=1)
    return positions, np.stack([rows, cols], axis=1)


def depth_to_cloud(img: DepthImage, cam: CameraIntrinsics, k_neighbors: int = 10,
                   pixel_mask: Optional[np.ndarray] = None) -> OrientedPointCloud:
    """Back-project valid pixels and estimate normals from their neighborhoods

    Raises:
        EmptyDepthImageError: no valid pixel (within pixel_mask when given)
    """
    positions, pixels = back_project(img, cam, pixel_mask)
    if len(positions) == 0:
        raise EmptyDepthImageError()
    return estimate_normals(positions, min(k_neighbors, len(positions)), pixels=pixels)


# ---------------------------------------------------------------------------
# Depth image files
# ---------------------------------------------------------------------------

def _write_pgm(path: Path, data: np.ndarray, max_value: int, dtype: str) -> None:
    header = f"P5\n{data.shape[1]} {data.shape[0]}\n{max_value}\n".encode("ascii")
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(data, dtype=dtype).tobytes())
    except OSError as e:
        raise DatasetIOError(path, str(e))


def _read_pgm(path: Path) -> Tuple[np.ndarray, int]:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DatasetIOError(path, str(e))

    tokens: List[bytes] = []
    position = 0
    while len(tokens) < 4:
        while position < len(raw) and raw[position:position + 1].isspace():
            position += 1
        if raw[position:position + 1] == b"#":
            end = raw.find(b"\n", position)
            if end < 0:
                raise DatasetIOError(path, "truncated PGM header")
            position = end + 1
            continue
        start = position
        while position < len(raw) and not raw[position:position + 1].isspace():
            position += 1
        if start == position:
            raise DatasetIOError(path, "truncated PGM header")
        tokens.append(raw[start:position])
    position += 1

    if tokens[0] != b"P5":
        raise DatasetIOError(path, "not a binary PGM")
    width, height, max_value = (int(token) for token in tokens[1:])
    dtype = "<u2" if max_value > 255 else "u1"
    count = width * height
    if len(raw) - position < count * np.dtype(dtype).itemsize:
        raise DatasetIOError(path, "truncated PGM data")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=position)
    return data.reshape(height, width), max_value


def write_depth_pgm(img: DepthImage, path: Union[str, Path]) -> None:
    """16-bit little-endian PGM in millimeters, clipped to 65.535 m"""
    millimeters = np.clip(np.round(img.depth * 1000.0), 0, PGM_MAX_MM).astype(np.uint16)
    _write_pgm(Path(path), millimeters, PGM_MAX_MM, "<u2")


def read_depth_pgm(path: Union[str, Path]) -> DepthImage:
    data, _ = _read_pgm(Path(path))
    return DepthImage(depth=data.astype(float) / 1000.0)


def write_label_pgm(labels: np.ndarray, path: Union[str, Path]) -> None:
    _write_pgm(Path(path), np.asarray(labels, dtype=np.uint8), 255, "u1")


def read_label_pgm(path: Union[str, Path]) -> np.ndarray:
    return _read_pgm(Path(path))[0].copy()


def header_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".txt")


def write_depth_raw(img: DepthImage, cam: CameraIntrinsics, path: Union[str, Path]) -> None:
    """Little-endian float32 meters plus a sidecar text header with size and intrinsics"""
    path = Path(path)
    header = "\n".join([
        f"width {img.width}",
        f"height {img.height}",
        f"fx {cam.fx!r}",
        f"fy {cam.fy!r}",
        f"cx {cam.cx!r}",
        f"cy {cam.cy!r}",
    ]) + "\n"
    try:
        path.write_bytes(img.depth.astype("<f4").tobytes())
        header_path(path).write_text(header, encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(path, str(e))


def read_depth_raw(path: Union[str, Path]) -> Tuple[DepthImage, CameraIntrinsics]:
    """Read a float32 depth file and its sidecar header"""
    path = Path(path)
    try:
        fields = dict(line.split(maxsplit=1) for line in header_path(path).read_text(encoding="utf-8").splitlines() if line.strip())
        raw = path.read_bytes()
    except OSError as e:
        raise DatasetIOError(path, str(e))
    except ValueError:
        raise DatasetIOError(header_path(path), "malformed depth header")

    try:
        width, height = int(fields["width"]), int(fields["height"])
        cam = CameraIntrinsics(fx=float(fields["fx"]), fy=float(fields["fy"]), cx=float(fields["cx"]),
                               cy=float(fields["cy"]), width=width, height=height)
    except (KeyError, ValueError) as e:
        raise DatasetIOError(header_path(path), f"malformed depth header ({e})")
    if len(raw) != 4 * width * height:
        raise DatasetIOError(path, f"expected {4 * width * height} bytes, found {len(raw)}")
    depth = np.frombuffer(raw, dtype="<f4").reshape(height, width).astype(float)
    return DepthImage(depth=depth), cam


def read_depth(path: Union[str, Path], cam: Optional[CameraIntrinsics] = None) -> Tuple[DepthImage, CameraIntrinsics]:
    """Read either depth format; a PGM needs intrinsics from the caller"""
    path = Path(path)
    if not path.is_file():
        raise DatasetIOError(path, "depth file not found")
    if path.suffix.lower() == ".pgm":
        if cam is None:
            raise DatasetIOError(path, "PGM depth needs intrinsics")
        img = read_depth_pgm(path)
        if not img.matches(cam):
            raise DatasetIOError(path, "image size does not match the intrinsics")
        return img, cam
    img, header_cam = read_depth_raw(path)
    return img, cam or header_cam
