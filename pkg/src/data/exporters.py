import logging
import os
from typing import List, Sequence

import numpy as np
import pandas as pd

from src.models.records import CSV_COLUMNS, BenchRecord, ConvergenceRow
from src.models.space import VDIM, FESpace
from src.utils.errors import InvalidArgumentError

logger = logging.getLogger(__name__)


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def records_to_frame(records: Sequence[BenchRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.csv_row() for r in records], columns=CSV_COLUMNS)


def emit_csv(records: Sequence[BenchRecord], path: str) -> str:
    """Write benchmark records with the fixed column order; OOM cells stay literal."""
    df = records_to_frame(records)
    _ensure_parent(path)
    df.to_csv(path, index=False, lineterminator='\n')
    logger.info(f"Wrote {len(df)} benchmark rows to {path}")
    return path


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


def emit_convergence_csv(rows: List[ConvergenceRow], path: str) -> str:
    df = pd.DataFrame([vars(r) for r in rows], columns=['level', 'h', 'scalar_ndof', 'l2_error', 'rate'])
    _ensure_parent(path)
    df.to_csv(path, index=False, lineterminator='\n')
    logger.info(f"Wrote {len(df)} convergence rows to {path}")
    return path


def emit_vtk(space: FESpace, solution: np.ndarray, path: str, title: str = 'displacement') -> str:
    """Legacy ASCII structured grid with the displacement sampled at the lattice nodes."""
    solution = np.asarray(solution, dtype=float)
    if solution.shape != (space.vector_ndof,):
        raise InvalidArgumentError(f"Expected a vector of size {space.vector_ndof}, got {solution.shape}")
    nx, ny, nz = space.lattice
    points = space.node_coordinates()
    vectors = solution.reshape(VDIM, space.scalar_ndof).T

    _ensure_parent(path)
    with open(path, 'w', newline='\n') as f:
        f.write('# vtk DataFile Version 3.0\n')
        f.write(f'{title} p={space.order}\n')
        f.write('ASCII\n')
        f.write('DATASET STRUCTURED_GRID\n')
        f.write(f'DIMENSIONS {nx} {ny} {nz}\n')
        f.write(f'POINTS {space.scalar_ndof} double\n')
        np.savetxt(f, points, fmt='%.17g')
        f.write(f'POINT_DATA {space.scalar_ndof}\n')
        f.write('VECTORS displacement double\n')
        np.savetxt(f, vectors, fmt='%.17g')
    logger.info(f"Wrote VTK structured grid ({space.scalar_ndof} points) to {path}")
    return path
