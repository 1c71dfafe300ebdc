"""KITTI text/binary formats and on-disk dataset layout.

Label lines carry 15 whitespace-separated fields::

    type truncated occluded alpha left top right bottom h w l x y z rotation_y

Detection (result) lines append a 16th field, the score. Point clouds are flat
little-endian float32 ``(x, y, z, intensity)`` records, 16 bytes each.

Boxes are converted from the rectified camera frame to the LiDAR frame with
the frame's calibration. Without calibration the label is read as authored
directly in the LiDAR frame: ``(x, y, z)`` is the box center and
``rotation_y`` is the LiDAR yaw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..geom3d import Box3D


class KittiFormatError(ValueError):
    """Malformed KITTI text or binary input."""


@dataclass(frozen=True)
class KittiLabel:
    category: str
    truncation: float
    occlusion: int
    alpha: float
    bbox: tuple[float, float, float, float]
    h: float
    w: float
    l: float
    x: float
    y: float
    z: float
    rotation_y: float
    score: float | None = None

    @property
    def bbox_height(self) -> float:
        return self.bbox[3] - self.bbox[1]


@dataclass(frozen=True)
class DetectionResult:
    box: Box3D
    score: float
    category: str = "Car"

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise KittiFormatError(f"non-finite detection score {self.score}")


@dataclass
class DetectionFrame:
    frame_id: str
    gts: list[tuple[KittiLabel, Box3D]] = field(default_factory=list)
    dets: list[DetectionResult] = field(default_factory=list)
    points: np.ndarray | None = None


def _parse_fields(parts: list[str], lineno: int, with_score: bool) -> KittiLabel:
    try:
        nums = [float(v) for v in parts[1:]]
    except ValueError as exc:
        raise KittiFormatError(f"line {lineno}: non-numeric field ({exc})") from None
    occ = nums[1]
    if occ != int(occ):
        raise KittiFormatError(f"line {lineno}: occlusion must be an integer, got {parts[2]}")
    return KittiLabel(
        category=parts[0],
        truncation=nums[0],
        occlusion=int(occ),
        alpha=nums[2],
        bbox=(nums[3], nums[4], nums[5], nums[6]),
        h=nums[7], w=nums[8], l=nums[9],
        x=nums[10], y=nums[11], z=nums[12],
        rotation_y=nums[13],
        score=nums[14] if with_score else None,
    )


def parse_label_file(text: str) -> list[KittiLabel]:
    """Parse ground-truth label text; every non-blank line must have 15 fields."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 15:
            raise KittiFormatError(f"line {lineno}: expected 15 fields, found {len(parts)}")
        out.append(_parse_fields(parts, lineno, with_score=False))
    return out


def parse_detection_file(text: str) -> list[KittiLabel]:
    """Parse result text: 16 fields per line, the last being the score."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 16:
            raise KittiFormatError(f"line {lineno}: expected 16 fields, found {len(parts)}")
        out.append(_parse_fields(parts, lineno, with_score=True))
    return out


def format_label_line(lab: KittiLabel) -> str:
    # repr keeps every float lossless so write -> parse is an exact round trip.
    vals = [lab.category, repr(float(lab.truncation)), str(lab.occlusion), repr(float(lab.alpha)),
            *(repr(float(v)) for v in lab.bbox),
            *(repr(float(v)) for v in (lab.h, lab.w, lab.l, lab.x, lab.y, lab.z, lab.rotation_y))]
    if lab.score is not None:
        vals.append(repr(float(lab.score)))
    return " ".join(vals)


def parse_pointcloud_bin(data: bytes) -> np.ndarray:
    """Decode a KITTI velodyne scan into an ``(N, 4)`` float32 array."""
    if len(data) % 16:
        raise KittiFormatError(f"point cloud byte length {len(data)} is not a multiple of 16")
    return np.frombuffer(data, dtype="<f4").reshape(-1, 4).copy()


def format_pointcloud_bin(points) -> bytes:
    pts = np.asarray(points)
    if pts.size == 0:
        return b""
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise KittiFormatError(f"points must be (N, 4), got shape {pts.shape}")
    return np.ascontiguousarray(pts, dtype="<f4").tobytes()


# ---------------------------------------------------------------------------
# Calibration

@dataclass(frozen=True)
class Calibration:
    r0_rect: np.ndarray  # (3, 3)
    velo_to_cam: np.ndarray  # (3, 4)

    @property
    def cam_to_velo(self) -> np.ndarray:
        """4x4 transform from rectified camera coordinates to LiDAR."""
        r0 = np.eye(4)
        r0[:3, :3] = self.r0_rect
        tr = np.eye(4)
        tr[:3, :] = self.velo_to_cam
        return np.linalg.inv(r0 @ tr)


def parse_calib_file(text: str) -> Calibration:
    mats = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise KittiFormatError(f"calib line {lineno}: missing ':'")
        try:
            mats[key.strip()] = np.array([float(v) for v in rest.split()])
        except ValueError:
            raise KittiFormatError(f"calib line {lineno}: non-numeric value") from None
    try:
        r0 = mats["R0_rect"].reshape(3, 3)
        tr = mats["Tr_velo_to_cam"].reshape(3, 4)
    except KeyError as exc:
        raise KittiFormatError(f"calib file lacks {exc.args[0]}") from None
    except ValueError as exc:
        raise KittiFormatError(f"calib matrix has the wrong size: {exc}") from None
    return Calibration(r0, tr)


def label_to_box(lab: KittiLabel, calib: Calibration | None = None) -> Box3D:
    if calib is None:
        return Box3D(lab.x, lab.y, lab.z, lab.w, lab.l, lab.h, lab.rotation_y)
    # Camera y points down and (x, y, z) is the bottom-face center.
    center_cam = np.array([lab.x, lab.y - 0.5 * lab.h, lab.z, 1.0])
    cx, cy, cz, _ = calib.cam_to_velo @ center_cam
    return Box3D(float(cx), float(cy), float(cz), lab.w, lab.l, lab.h, -lab.rotation_y - 0.5 * math.pi)


def box_to_label(box: Box3D, category: str = "Car", *, truncation: float = 0.0, occlusion: int = 0,
                 bbox: tuple[float, float, float, float] = (0.0, 0.0, 100.0, 100.0),
                 score: float | None = None) -> KittiLabel:
    """LiDAR-frame label (no calibration) for ``box``."""
    return KittiLabel(category, truncation, occlusion, 0.0, bbox, box.h, box.w, box.l,
                      box.cx, box.cy, box.cz, box.yaw, score)


# ---------------------------------------------------------------------------
# Dataset directories

def _frame_ids(directory: Path, suffix: str) -> list[str]:
    return sorted(p.stem for p in directory.glob(f"*{suffix}"))


def load_dataset(gt_dir, det_dir, velodyne_dir=None, calib_dir=None) -> list[DetectionFrame]:
    """Read matching ``<id>.txt`` files from ``gt_dir`` and ``det_dir``.

    Frames are returned sorted by id. A frame id present in only one of the two
    directories is an error naming every such id.
    """
    gt_dir, det_dir = Path(gt_dir), Path(det_dir)
    for d in (gt_dir, det_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"not a directory: {d}")
    gt_ids = set(_frame_ids(gt_dir, ".txt"))
    det_ids = set(_frame_ids(det_dir, ".txt"))
    if gt_ids != det_ids:
        missing_det = sorted(gt_ids - det_ids)
        missing_gt = sorted(det_ids - gt_ids)
        msg = []
        if missing_det:
            msg.append(f"no detections for frames {missing_det} in {det_dir}")
        if missing_gt:
            msg.append(f"no labels for frames {missing_gt} in {gt_dir}")
        raise KittiFormatError("; ".join(msg))

    frames = []
    for fid in sorted(gt_ids):
        calib = None
        if calib_dir is not None:
            cpath = Path(calib_dir) / f"{fid}.txt"
            calib = _parse_with_context(parse_calib_file, cpath)
        labels = _parse_with_context(parse_label_file, gt_dir / f"{fid}.txt")
        dets = _parse_with_context(parse_detection_file, det_dir / f"{fid}.txt")
        points = None
        if velodyne_dir is not None:
            vpath = Path(velodyne_dir) / f"{fid}.bin"
            try:
                points = parse_pointcloud_bin(vpath.read_bytes())
            except KittiFormatError as exc:
                raise KittiFormatError(f"{vpath}: {exc}") from None
        frames.append(DetectionFrame(
            frame_id=fid,
            gts=[(lab, label_to_box(lab, calib)) for lab in labels if lab.category != "DontCare"],
            dets=[DetectionResult(label_to_box(d, calib), d.score, d.category) for d in dets],
            points=points,
        ))
    return frames


def _read_text(path: Path) -> str:
    try:
        text = path.read_text()
    except OSError as exc:
        raise KittiFormatError(f"{path}: {exc.strerror}") from None
    return text


def _parse_with_context(fn, path: Path):
    try:
        return fn(_read_text(path))
    except KittiFormatError as exc:
        raise KittiFormatError(f"{path}: {exc}") from None


def write_dataset(frames: Sequence[DetectionFrame], root) -> dict[str, Path]:
    """Write ``label/``, ``det/`` and (when frames carry points) ``velodyne/`` under ``root``."""
    root = Path(root)
    dirs = {"label": root / "label", "det": root / "det", "velodyne": root / "velodyne"}
    for key in ("label", "det"):
        dirs[key].mkdir(parents=True, exist_ok=True)
    for fr in frames:
        (dirs["label"] / f"{fr.frame_id}.txt").write_text(
            "".join(format_label_line(lab) + "\n" for lab, _ in fr.gts))
        (dirs["det"] / f"{fr.frame_id}.txt").write_text(
            "".join(format_label_line(box_to_label(d.box, d.category, score=d.score)) + "\n" for d in fr.dets))
        if fr.points is not None:
            dirs["velodyne"].mkdir(parents=True, exist_ok=True)
            (dirs["velodyne"] / f"{fr.frame_id}.bin").write_bytes(format_pointcloud_bin(fr.points))
    return dirs
