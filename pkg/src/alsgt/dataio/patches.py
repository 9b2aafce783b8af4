"""ALS tiling and the image/patch pairing index."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..cloud.pointcloud import as_cloud
from ..errors import MalformedLine

TILE_SIZE = 10.0


@dataclass(frozen=True)
class PatchEntry:
    image: str
    patch: str
    cx: float
    cy: float


def read_patch_index(path):
    """Entries of ``image patch cx cy`` lines; blanks and ``#`` comments are skipped."""
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 4:
                raise MalformedLine(n, f"expected 4 fields, got {len(parts)}")
            try:
                cx, cy = float(parts[2]), float(parts[3])
            except ValueError as exc:
                raise MalformedLine(n, str(exc)) from None
            out.append(PatchEntry(parts[0], parts[1], cx, cy))
    return out


def write_patch_index(path, entries):
    lines = [f"{e.image} {e.patch} {float(e.cx)!r} {float(e.cy)!r}" for e in entries]
    Path(path).write_text("".join(line + "\n" for line in lines))
    return Path(path)


def tile_indices(xy, tile=TILE_SIZE):
    """Integer tile indices by floor; a point on a boundary goes to the higher tile."""
    return np.floor(np.asarray(xy, dtype=float)[..., :2] / tile).astype(np.int64)


def tile_name(ix, iy):
    return f"tile_{int(ix):02d}_{int(iy):02d}"


def tile_center(ix, iy, tile=TILE_SIZE):
    return ((ix + 0.5) * tile, (iy + 0.5) * tile)


@dataclass(frozen=True, eq=False)
class Patch:
    name: str
    ix: int
    iy: int
    center: tuple
    indices: np.ndarray
    cloud: object


def tile_als(cloud, tile=TILE_SIZE):
    """Partition a cloud into square tiles, ordered by (ix, iy).

    Within a tile points keep their input order.
    """
    cloud = as_cloud(cloud)
    if len(cloud) == 0:
        return []
    ij = tile_indices(cloud.points, tile)
    keys, inverse = np.unique(ij, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(keys) + 1))
    out = []
    for k, (ix, iy) in enumerate(keys):
        idx = order[bounds[k]:bounds[k + 1]]
        out.append(Patch(tile_name(ix, iy), int(ix), int(iy), tile_center(ix, iy, tile), idx,
                         cloud.subset(idx)))
    return out


def patch_for_position(xy, tile=TILE_SIZE):
    ix, iy = tile_indices(np.asarray(xy, float).reshape(2), tile)
    return tile_name(ix, iy), tile_center(ix, iy, tile)
