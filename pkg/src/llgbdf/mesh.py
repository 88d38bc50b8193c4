"""Structured hexahedral meshes of thin-film boxes [0,1] x [0,1] x [0,L]."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Uniform box mesh with ``nx * ny * nz`` identical axis-aligned cells.

    Vertices and cells are numbered lexicographically with ``x`` fastest,
    i.e. vertex ``(ix, iy, iz)`` has index ``ix + (nx+1)*(iy + (ny+1)*iz)``.
    """

    nx: int
    ny: int
    nz: int
    L: float
    vertices: np.ndarray = field(repr=False, compare=False)
    cells: np.ndarray = field(repr=False, compare=False)

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def hz(self) -> float:
        return self.L / self.nz

    @property
    def cell_size(self) -> tuple[float, float, float]:
        return (self.hx, self.hy, self.hz)

    @property
    def h(self) -> float:
        """Meshwidth, the largest cell edge."""
        return max(self.hx, self.hy, self.hz)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def n_vertices(self) -> int:
        return (self.nx + 1) * (self.ny + 1) * (self.nz + 1)

    @property
    def volume(self) -> float:
        return self.L

    def cell_origins(self) -> np.ndarray:
        """Lower-left-front corner of every cell, shape ``(n_cells, 3)``."""
        return self.vertices[self.cells[:, 0]]

    def cell_volumes(self) -> np.ndarray:
        return np.full(self.n_cells, self.hx * self.hy * self.hz)


def build_box_mesh(nx: int, ny: int, nz: int, L: float) -> Mesh:
    """Build the box mesh of ``[0,1] x [0,1] x [0,L]`` with the given cell counts."""
    for name, n in (("nx", nx), ("ny", ny), ("nz", nz)):
        if int(n) != n or n < 1:
            raise ValueError(f"{name} must be a positive integer, got {n!r}")
    if not L > 0:
        raise ValueError(f"thickness L must be positive, got {L!r}")
    nx, ny, nz, L = int(nx), int(ny), int(nz), float(L)

    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    zs = np.linspace(0.0, L, nz + 1)
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(ix, iy, iz):
        return ix + (nx + 1) * (iy + (ny + 1) * iz)

    iz, iy, ix = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    # local vertex order is lexicographic as well: (0,0,0), (1,0,0), (0,1,0), ...
    cells = np.column_stack(
        [vid(ix + a, iy + b, iz + c) for c in (0, 1) for b in (0, 1) for a in (0, 1)]
    )
    return Mesh(nx, ny, nz, L, vertices, cells)
