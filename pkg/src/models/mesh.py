from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from src.utils.errors import InvalidArgumentError


class BoundaryAttribute(Enum):
    """The six faces of the box domain; value = (axis, side)."""

    X_MIN = (0, 0)
    X_MAX = (0, 1)
    Y_MIN = (1, 0)
    Y_MAX = (1, 1)
    Z_MIN = (2, 0)
    Z_MAX = (2, 1)

    @property
    def axis(self) -> int:
        return self.value[0]

    @property
    def side(self) -> int:
        return self.value[1]

    @property
    def label(self) -> str:
        return f"{'xyz'[self.axis]}-{'min' if self.side == 0 else 'max'}"

    @classmethod
    def from_label(cls, label: str) -> 'BoundaryAttribute':
        """Parse 'x-min', 'xmin' or 'X_MIN'."""
        key = label.strip().lower().replace('_', '-')
        if '-' not in key and len(key) == 4:
            key = f"{key[0]}-{key[1:]}"
        for attribute in cls:
            if attribute.label == key:
                return attribute
        raise InvalidArgumentError(f"Unknown boundary face '{label}'")


@dataclass(frozen=True)
class CartesianMesh:
    """Axis-aligned box split into congruent hexahedra, cells ordered x fastest."""

    extents: Tuple[float, float, float]
    cells: Tuple[int, int, int]
    level: int = 0

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def vertices_per_axis(self) -> Tuple[int, int, int]:
        return tuple(n + 1 for n in self.cells)

    @property
    def num_vertices(self) -> int:
        return int(np.prod(self.vertices_per_axis))

    @property
    def cell_size(self) -> np.ndarray:
        return np.array([self.extents[k] / self.cells[k] for k in range(3)])

    @property
    def h_max(self) -> float:
        return float(self.cell_size.max())

    def axis_coordinates(self, axis: int, points_per_cell: int = 1) -> np.ndarray:
        """Lattice coordinates along one axis with `points_per_cell` intervals per cell."""
        n = self.cells[axis] * points_per_cell
        return self.extents[axis] * np.arange(n + 1, dtype=float) / n

    def vertex_coordinates(self) -> np.ndarray:
        """(num_vertices, 3) array, x fastest."""
        x, y, z = (self.axis_coordinates(k) for k in range(3))
        zz, yy, xx = np.meshgrid(z, y, x, indexing='ij')
        return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def element_indices(self) -> np.ndarray:
        """(num_cells, 3) integer (ex, ey, ez) per element."""
        nx, ny, nz = self.cells
        e = np.arange(self.num_cells)
        return np.stack([e % nx, (e // nx) % ny, e // (nx * ny)], axis=1)

    def element_vertices(self) -> np.ndarray:
        """(num_cells, 2, 2, 2, 3) corner coordinates indexed [z, y, x]."""
        h = self.cell_size
        origin = self.element_indices() * h
        corners = np.zeros((self.num_cells, 2, 2, 2, 3))
        for kz in range(2):
            for ky in range(2):
                for kx in range(2):
                    corners[:, kz, ky, kx, :] = origin + np.array([kx, ky, kz]) * h
        return corners

    def element_jacobian(self) -> np.ndarray:
        return np.diag(self.cell_size)

    def element_colors(self) -> np.ndarray:
        """8-coloring: elements of one color never share a vertex."""
        idx = self.element_indices()
        return (idx[:, 0] % 2) + 2 * (idx[:, 1] % 2) + 4 * (idx[:, 2] % 2)

    def boundary_faces(self) -> List[Tuple[int, BoundaryAttribute]]:
        """(element, attribute) for every exterior quadrilateral face."""
        idx = self.element_indices()
        faces = []
        for attribute in BoundaryAttribute:
            target = 0 if attribute.side == 0 else self.cells[attribute.axis] - 1
            for element in np.flatnonzero(idx[:, attribute.axis] == target):
                faces.append((int(element), attribute))
        return faces

    @property
    def exterior_face_count(self) -> int:
        nx, ny, nz = self.cells
        return 2 * (nx * ny + ny * nz + nx * nz)


def build_cartesian_mesh(extents: Sequence[float], cells_per_axis: Sequence[int]) -> CartesianMesh:
    if len(extents) != 3 or len(cells_per_axis) != 3:
        raise InvalidArgumentError("extents and cells_per_axis need exactly 3 entries")
    for value in extents:
        if not np.isfinite(value) or value <= 0:
            raise InvalidArgumentError(f"Extents must be positive, got {tuple(extents)}")
    for count in cells_per_axis:
        if int(count) != count or count < 1:
            raise InvalidArgumentError(f"Cell counts must be integers >= 1, got {tuple(cells_per_axis)}")
    return CartesianMesh(
        extents=tuple(float(v) for v in extents),
        cells=tuple(int(n) for n in cells_per_axis),
        level=0,
    )


def refine_uniform(mesh: CartesianMesh) -> CartesianMesh:
    return CartesianMesh(
        extents=mesh.extents,
        cells=tuple(2 * n for n in mesh.cells),
        level=mesh.level + 1,
    )


def build_hierarchy(base: CartesianMesh, levels: int) -> List[CartesianMesh]:
    """`levels` meshes, coarsest first."""
    if levels < 1:
        raise InvalidArgumentError(f"levels must be >= 1, got {levels}")
    meshes = [base]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes
