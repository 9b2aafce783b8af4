"""On-disk sequence bundle: ALS tiles, pose file, patch index and calibration.

Layout::

    <root>/als/<tile>.las
    <root>/images/            (optional; image files are treated as names)
    <root>/poses.txt          one pose per patch-index row, same order
    <root>/projection/patch_index.txt
    <root>/projection/calibration.txt
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import MalformedLine, StageError
from ..geom import RigidTransform
from .las import read_las_points, write_las
from .patches import PatchEntry, patch_for_position, read_patch_index, tile_als, write_patch_index
from .poses import parse_pose_line, read_pose_file, write_pose_file
from .projection import CameraModel

LOAD_EXIT_CODE = 2


@dataclass(frozen=True, eq=False)
class Calibration:
    camera: CameraModel
    T_ext: RigidTransform


def write_calibration(path, calib):
    cam = calib.camera
    lines = [
        "P = " + " ".join(repr(float(v)) for v in cam.P.ravel()),
        f"width = {int(cam.width)}",
        f"height = {int(cam.height)}",
        "T_ext = " + " ".join(repr(float(v)) for v in calib.T_ext.as_matrix().ravel()),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_calibration(path):
    vals = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise MalformedLine(n, "expected 'key = value'")
        k, v = body.split("=", 1)
        vals[k.strip()] = (v.strip(), n)
    try:
        P = np.array([float(x) for x in vals["P"][0].split()]).reshape(3, 3)
        cam = CameraModel(P, int(vals["width"][0]), int(vals["height"][0]))
        T_ext = parse_pose_line(vals["T_ext"][0], vals["T_ext"][1])
    except KeyError as exc:
        raise MalformedLine(0, f"missing calibration key {exc}") from None
    except ValueError as exc:
        if isinstance(exc, MalformedLine):
            raise
        raise MalformedLine(0, str(exc)) from None
    return Calibration(cam, T_ext)


@dataclass(frozen=True, eq=False)
class SequenceBundle:
    root: Path
    entries: tuple
    poses: tuple
    calibration: Calibration
    images: tuple

    @property
    def patches_dir(self):
        return self.root / "als"

    @property
    def pose_file(self):
        return self.root / "poses.txt"

    def patch_path(self, name):
        return self.patches_dir / name

    def load_patch(self, name):
        return read_las_points(self.patch_path(name))


def load_bundle(root):
    """Load and validate a bundle; any missing piece is a load-stage error (exit code 2)."""
    root = Path(root)
    try:
        entries = read_patch_index(root / "projection" / "patch_index.txt")
        poses = read_pose_file(root / "poses.txt")
        calib = read_calibration(root / "projection" / "calibration.txt")
    except (OSError, MalformedLine, ValueError) as exc:
        raise StageError("load", str(exc), LOAD_EXIT_CODE) from exc
    missing = sorted({e.patch for e in entries if not (root / "als" / e.patch).is_file()})
    if missing:
        raise StageError("load", f"missing patch file(s): {', '.join(missing)}", LOAD_EXIT_CODE)
    if len(poses) != len(entries):
        raise StageError("load", f"{len(poses)} poses for {len(entries)} index rows",
                         LOAD_EXIT_CODE)
    img_dir = root / "images"
    images = tuple(sorted(p.name for p in img_dir.iterdir())) if img_dir.is_dir() else \
        tuple(e.image for e in entries)
    return SequenceBundle(root, tuple(entries), tuple(poses), calib, images)


def export_bundle(root, als, image_poses, calibration, image_names=None, las_version=(1, 2)):
    """Write a bundle: tiles of ``als`` plus one index row and pose per image.

    ``image_poses`` are LiDAR poses in the map frame; each image is paired
    with the tile containing its pose position.
    """
    root = Path(root)
    (root / "als").mkdir(parents=True, exist_ok=True)
    (root / "projection").mkdir(parents=True, exist_ok=True)
    for p in tile_als(als):
        write_las(root / "als" / f"{p.name}.las", p.cloud, version=las_version)
    names = image_names or [f"{k:06d}.jpg" for k in range(len(image_poses))]
    entries = []
    for name, T in zip(names, image_poses):
        tile, (cx, cy) = patch_for_position(T.translation[:2])
        entries.append(PatchEntry(name, f"{tile}.las", cx, cy))
    write_patch_index(root / "projection" / "patch_index.txt", entries)
    write_pose_file(root / "poses.txt", image_poses)
    write_calibration(root / "projection" / "calibration.txt", calibration)
    return root
