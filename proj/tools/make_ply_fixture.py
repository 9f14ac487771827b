"""Writes the cross-tool PLY fixture used by io_test.

Produces a binary little-endian file and its ASCII twin with plyfile, an
implementation independent of the C++ reader. Vertices carry extra per-vertex
properties and the files include a face element with list properties so the
reader's skipping logic is exercised as well.

    python3 tools/make_ply_fixture.py tests/data
"""

import sys
from pathlib import Path

import numpy as np
from plyfile import PlyData, PlyElement


def main(out_dir: Path) -> None:
    rng = np.random.default_rng(20240611)
    n = 257
    vertex = np.empty(
        n,
        dtype=[("x", "f4"), ("y", "f4"), ("z", "f4"),
               ("nx", "f4"), ("ny", "f4"), ("nz", "f4"),
               ("red", "u1"), ("green", "u1"), ("blue", "u1"), ("quality", "f8")],
    )
    xyz = rng.uniform(-0.08, 0.08, size=(n, 3)).astype("f4")
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    vertex["x"], vertex["y"], vertex["z"] = xyz.T
    vertex["nx"], vertex["ny"], vertex["nz"] = normals.astype("f4").T
    colors = rng.integers(0, 256, size=(n, 3), dtype="u1")
    vertex["red"], vertex["green"], vertex["blue"] = colors.T
    vertex["quality"] = rng.uniform(size=n)

    faces = np.empty(40, dtype=[("vertex_indices", "i4", (3,))])
    faces["vertex_indices"] = rng.integers(0, n, size=(40, 3))

    elements = [PlyElement.describe(vertex, "vertex"),
                PlyElement.describe(faces, "face")]
    out_dir.mkdir(parents=True, exist_ok=True)
    PlyData(elements, text=False, byte_order="<",
            comments=["cross-tool fixture"]).write(str(out_dir / "plyfile_binary.ply"))
    PlyData(elements, text=True,
            comments=["cross-tool fixture"]).write(str(out_dir / "plyfile_ascii.ply"))
    PlyData(elements, text=False, byte_order=">").write(str(out_dir / "plyfile_big_endian.ply"))


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "tests/data"))
