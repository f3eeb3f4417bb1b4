import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Tuple, Union

import numpy as np
import scipy.sparse as sp

from src.models.basis import gauss_lobatto_nodes, lagrange_matrix
from src.models.mesh import BoundaryAttribute, CartesianMesh
from src.utils.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

VDIM = 3
COMPONENTS = {'x': 0, 'y': 1, 'z': 2}


class FESpace:
    """Continuous vector H1 space of order p on a CartesianMesh.

    Scalar DOFs sit on the lattice of p*cells+1 points per axis (x fastest);
    vectors are component-blocked: index = component * scalar_ndof + dof.
    """

    def __init__(self, mesh: CartesianMesh, order: int):
        if int(order) != order or order < 1:
            raise InvalidArgumentError(f"order must be >= 1, got {order}")
        self.mesh = mesh
        self.order = int(order)
        self.nodes_1d = gauss_lobatto_nodes(self.order)
        self.lattice = tuple(self.order * n + 1 for n in mesh.cells)
        self.scalar_ndof = int(np.prod(self.lattice))
        self.vector_ndof = VDIM * self.scalar_ndof
        self.dofmap = self._build_dofmap()
        self._colors = None

    @property
    def nodes_per_element(self) -> int:
        return (self.order + 1) ** 3

    @property
    def num_elements(self) -> int:
        return self.mesh.num_cells

    def _build_dofmap(self) -> np.ndarray:
        p = self.order
        Nx, Ny, _ = self.lattice
        n1 = p + 1
        local = np.arange(n1)
        iz, iy, ix = np.meshgrid(local, local, local, indexing='ij')
        ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
        elem = self.mesh.element_indices()
        gx = elem[:, 0:1] * p + ix[None, :]
        gy = elem[:, 1:2] * p + iy[None, :]
        gz = elem[:, 2:3] * p + iz[None, :]
        return (gx + Nx * (gy + Ny * gz)).astype(np.int64)

    def lattice_coordinates(self, axis: int) -> np.ndarray:
        """1D node coordinates along `axis`, Gauss-Lobatto spaced inside each cell."""
        cells = self.mesh.cells[axis]
        h = self.mesh.extents[axis] / cells
        cell = np.repeat(np.arange(cells), self.order)
        offset = np.tile(self.nodes_1d[:-1], cells)
        coords = (cell + offset) * h
        return np.append(coords, self.mesh.extents[axis])

    def node_coordinates(self) -> np.ndarray:
        """(scalar_ndof, 3) node coordinates, x fastest."""
        x, y, z = (self.lattice_coordinates(k) for k in range(3))
        zz, yy, xx = np.meshgrid(z, y, x, indexing='ij')
        return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def element_colors(self) -> np.ndarray:
        if self._colors is None:
            self._colors = self.mesh.element_colors()
        return self._colors

    def interpolate(self, field_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], Iterable]) -> np.ndarray:
        """Nodal samples of a vector field f(x, y, z) -> (fx, fy, fz)."""
        xyz = self.node_coordinates()
        values = field_fn(xyz[:, 0], xyz[:, 1], xyz[:, 2])
        out = np.empty((VDIM, self.scalar_ndof))
        for c in range(VDIM):
            out[c] = np.broadcast_to(np.asarray(values[c], dtype=float), (self.scalar_ndof,))
        return out.ravel()

    def rigid_body_modes(self) -> np.ndarray:
        """(6, vector_ndof): three translations then three linearized rotations."""
        xyz = self.node_coordinates()
        x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
        zero, one = np.zeros_like(x), np.ones_like(x)
        fields = [
            (one, zero, zero),
            (zero, one, zero),
            (zero, zero, one),
            (y, -x, zero),
            (zero, z, -y),
            (-z, zero, x),
        ]
        return np.array([np.concatenate(f) for f in fields])

    def gather_elements(self, x: np.ndarray, elements: np.ndarray = None) -> np.ndarray:
        """(E, 3, n) local values for the given elements (all by default)."""
        dofs = self.dofmap if elements is None else self.dofmap[elements]
        return x.reshape(VDIM, self.scalar_ndof)[:, dofs].transpose(1, 0, 2)

    def scatter_add_elements(self, local: np.ndarray, y: np.ndarray, elements: np.ndarray = None):
        """Accumulate (E, 3, n) local values into y; duplicates are summed."""
        dofs = self.dofmap if elements is None else self.dofmap[elements]
        target = y.reshape(VDIM, self.scalar_ndof)
        for c in range(VDIM):
            np.add.at(target[c], dofs, local[:, c, :])

    def multiplicity(self) -> np.ndarray:
        """Number of elements sharing each scalar DOF."""
        counts = np.zeros(self.scalar_ndof)
        np.add.at(counts, self.dofmap, 1.0)
        return counts


def build_space(mesh: CartesianMesh, p: int) -> FESpace:
    space = FESpace(mesh, p)
    logger.debug(f"Space p={p} on {mesh.cells}: {space.vector_ndof} vector DOFs")
    return space


def _check_vector(space: FESpace, x: np.ndarray):
    if x.shape != (space.vector_ndof,):
        raise InvalidArgumentError(f"Expected vector of length {space.vector_ndof}, got shape {x.shape}")


def _check_element(space: FESpace, element: int):
    if not 0 <= element < space.num_elements:
        raise IndexError(f"element {element} outside 0..{space.num_elements - 1}")


def gather(space: FESpace, element: int, global_vector: np.ndarray) -> np.ndarray:
    """3*(p+1)^3 local values, component-blocked, element-lexicographic."""
    _check_vector(space, global_vector)
    _check_element(space, element)
    return global_vector.reshape(VDIM, space.scalar_ndof)[:, space.dofmap[element]].ravel()


def scatter_add(space: FESpace, element: int, local_vector: np.ndarray, global_vector: np.ndarray) -> np.ndarray:
    _check_vector(space, global_vector)
    _check_element(space, element)
    target = global_vector.reshape(VDIM, space.scalar_ndof)
    local = np.asarray(local_vector).reshape(VDIM, space.nodes_per_element)
    dofs = space.dofmap[element]
    for c in range(VDIM):
        target[c, dofs] += local[c]
    return global_vector


@dataclass(frozen=True)
class BcConstraint:
    """Sorted, unique constrained vector-DOF indices."""

    dofs: np.ndarray
    vector_ndof: int

    def __len__(self):
        return len(self.dofs)

    def free_mask(self) -> np.ndarray:
        """Z as a 0/1 vector: 1 on free DOFs, 0 on constrained ones."""
        mask = np.ones(self.vector_ndof)
        mask[self.dofs] = 0.0
        return mask


@dataclass(frozen=True)
class BcSpec:
    """Which faces and components carry Dirichlet data; re-derived per level."""

    attributes: Tuple[BoundaryAttribute, ...] = ()
    components: Tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        # face labels ('x-min') and component names ('x') are accepted and normalised
        attrs = tuple(f if isinstance(f, BoundaryAttribute) else BoundaryAttribute.from_label(f)
                      for f in self.attributes)
        object.__setattr__(self, 'attributes', attrs)
        object.__setattr__(self, 'components', tuple(_component_index(c) for c in self.components))

    @classmethod
    def clamped(cls, *faces: Union[str, BoundaryAttribute]) -> 'BcSpec':
        return cls(attributes=tuple(faces), components=(0, 1, 2))

    @classmethod
    def all_faces(cls) -> 'BcSpec':
        return cls(attributes=tuple(BoundaryAttribute), components=(0, 1, 2))


def _component_index(component: Union[int, str]) -> int:
    if isinstance(component, str):
        if component.lower() not in COMPONENTS:
            raise InvalidArgumentError(f"Unknown component '{component}'")
        return COMPONENTS[component.lower()]
    if component not in (0, 1, 2):
        raise InvalidArgumentError(f"Component index must be 0, 1 or 2, got {component}")
    return int(component)


def boundary_dofs(space: FESpace, attributes: Iterable[BoundaryAttribute],
                  components: Iterable[Union[int, str]] = (0, 1, 2)) -> BcConstraint:
    Nx, Ny, Nz = space.lattice
    iz, iy, ix = np.meshgrid(np.arange(Nz), np.arange(Ny), np.arange(Nx), indexing='ij')
    lattice_index = (ix.ravel(), iy.ravel(), iz.ravel())
    on_face = np.zeros(space.scalar_ndof, dtype=bool)
    for attribute in attributes:
        axis = attribute.axis
        target = 0 if attribute.side == 0 else space.lattice[axis] - 1
        on_face |= lattice_index[axis] == target
    nodes = np.flatnonzero(on_face)
    comps = sorted({_component_index(c) for c in components})
    if len(nodes) == 0 or not comps:
        return BcConstraint(dofs=np.zeros(0, dtype=np.int64), vector_ndof=space.vector_ndof)
    dofs = np.concatenate([c * space.scalar_ndof + nodes for c in comps]).astype(np.int64)
    return BcConstraint(dofs=np.unique(dofs), vector_ndof=space.vector_ndof)


def constraint_for(space: FESpace, spec: BcSpec) -> BcConstraint:
    return boundary_dofs(space, spec.attributes, spec.components)


@dataclass(frozen=True)
class Prolongation:
    """Scalar interpolation matrix applied per component; restriction is its transpose."""

    coarse: FESpace
    fine: FESpace
    matrix: sp.csr_matrix = field(repr=False)

    def prolong(self, x_coarse: np.ndarray) -> np.ndarray:
        xc = x_coarse.reshape(VDIM, self.coarse.scalar_ndof)
        return (self.matrix @ xc.T).T.ravel()

    def restrict(self, y_fine: np.ndarray) -> np.ndarray:
        yf = y_fine.reshape(VDIM, self.fine.scalar_ndof)
        return (self.matrix.T @ yf.T).T.ravel()

    @property
    def stored_bytes(self) -> int:
        m = self.matrix
        return 12 * m.nnz + 4 * (m.shape[0] + 1)


def _interpolation_1d(nodes: np.ndarray, coarse_cells: int) -> sp.csr_matrix:
    """Fine lattice nodes from coarse lattice nodes along one axis."""
    p = len(nodes) - 1
    fine_cells = 2 * coarse_cells
    rows, cols, vals = [], [], []
    for j in range(p * fine_cells + 1):
        f, i = divmod(j, p)
        if f == fine_cells:
            f, i = fine_cells - 1, p
        c, half = divmod(f, 2)
        s = (half + nodes[i]) / 2.0
        weights = lagrange_matrix(nodes, np.array([s]))[0]
        for k in np.flatnonzero(weights):
            rows.append(j)
            cols.append(c * p + k)
            vals.append(weights[k])
    shape = (p * fine_cells + 1, p * coarse_cells + 1)
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def build_prolongation(coarse: FESpace, fine: FESpace) -> Prolongation:
    nested = (
        coarse.order == fine.order
        and coarse.mesh.extents == fine.mesh.extents
        and all(2 * c == f for c, f in zip(coarse.mesh.cells, fine.mesh.cells))
    )
    if not nested:
        raise InvalidArgumentError(
            f"Spaces are not nested: coarse {coarse.mesh.cells} p={coarse.order}, "
            f"fine {fine.mesh.cells} p={fine.order}"
        )
    Px, Py, Pz = (_interpolation_1d(coarse.nodes_1d, coarse.mesh.cells[k]) for k in range(3))
    matrix = sp.kron(Pz, sp.kron(Py, Px), format='csr')
    return Prolongation(coarse=coarse, fine=fine, matrix=matrix)
