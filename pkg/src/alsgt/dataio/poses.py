"""Pose files: one row-major 4x4 rigid transform (16 numbers) per line."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import MalformedLine, NonRigidMatrix
from ..geom import RigidTransform, orthonormalize

ORTHO_TOL = 1e-3
BOTTOM_TOL = 1e-6


def parse_pose_line(line, line_no=0):
    parts = line.split()
    if len(parts) != 16:
        raise MalformedLine(line_no, f"expected 16 values, got {len(parts)}")
    try:
        M = np.array([float(p) for p in parts]).reshape(4, 4)
    except ValueError as exc:
        raise MalformedLine(line_no, str(exc)) from None
    if not np.all(np.isfinite(M)):
        raise MalformedLine(line_no, "non-finite value")
    if np.abs(M[3] - [0.0, 0.0, 0.0, 1.0]).max() > BOTTOM_TOL:
        raise NonRigidMatrix(line_no, "bottom row is not (0, 0, 0, 1)")
    R = M[:3, :3]
    if np.abs(R @ R.T - np.eye(3)).max() > ORTHO_TOL or np.linalg.det(R) <= 0:
        raise NonRigidMatrix(line_no, "rotation block is not orthonormal")
    # exact rotations pass through untouched so text roundtrips stay bit-faithful
    if np.abs(R @ R.T - np.eye(3)).max() > 1e-12:
        R = orthonormalize(R)
    return RigidTransform(R, M[:3, 3])


def read_pose_file(path):
    """Transforms in file order; blank lines are skipped, line numbers are 1-based."""
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                out.append(parse_pose_line(line, n))
    return out


def format_pose(T):
    return " ".join(repr(float(v)) for v in T.as_matrix().ravel())


def write_pose_file(path, transforms):
    """Write with shortest round-trip float formatting."""
    text = "".join(format_pose(T) + "\n" for T in transforms)
    Path(path).write_text(text)
    return Path(path)


def write_trajectory_csv(path, timestamps, transforms):
    """``timestamp,m00,...,m33`` per line, same float formatting as pose files."""
    lines = ["timestamp," + ",".join(f"m{r}{c}" for r in range(4) for c in range(4))]
    for t, T in zip(timestamps, transforms):
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in T.as_matrix().ravel()]))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def read_trajectory_csv(path):
    rows = Path(path).read_text().splitlines()
    ts, poses = [], []
    for n, line in enumerate(rows[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 17:
            raise MalformedLine(n, f"expected 17 fields, got {len(parts)}")
        ts.append(float(parts[0]))
        poses.append(parse_pose_line(" ".join(parts[1:]), n))
    return np.array(ts), poses
