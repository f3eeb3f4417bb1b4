from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple, Union

CSV_COLUMNS = [
    'variant', 'p', 'levels', 'ndof', 'iters', 'setup_s', 'solve_s', 'apply_s', 'total_s',
    'flops', 'bytes_model', 'op_intensity', 'mdof_per_s', 'operator_bytes',
]

OOM = 'OOM'


@dataclass
class ConvergenceRow:
    level: int
    h: float
    scalar_ndof: int
    l2_error: float
    rate: Optional[float] = None


@dataclass
class BenchRecord:
    """One (variant, p) measurement; timing and counter fields read OOM for skipped FA builds."""

    variant: str
    p: int
    levels: int
    ndof: int
    iters: Union[int, str] = 0
    setup_s: Union[float, str] = 0.0
    solve_s: Union[float, str] = 0.0
    apply_s: Union[float, str] = 0.0
    total_s: Union[float, str] = 0.0
    flops: Union[int, str] = 0
    bytes_model: Union[int, str] = 0
    op_intensity: Union[float, str] = 0.0
    mdof_per_s: Union[float, str] = 0.0
    operator_bytes: int = 0
    preconditioner: str = 'gmg'
    peak_rss_bytes: Optional[int] = None

    @property
    def is_oom(self) -> bool:
        return self.iters == OOM

    @classmethod
    def out_of_memory(cls, variant: str, p: int, levels: int, ndof: int, estimate_bytes: int,
                      preconditioner: str = 'gmg') -> 'BenchRecord':
        return cls(
            variant=variant, p=p, levels=levels, ndof=ndof,
            iters=OOM, setup_s=OOM, solve_s=OOM, apply_s=OOM, total_s=OOM,
            flops=OOM, bytes_model=OOM, op_intensity=OOM, mdof_per_s=OOM,
            operator_bytes=int(estimate_bytes), preconditioner=preconditioner,
        )

    def csv_row(self) -> Dict:
        data = asdict(self)
        return {column: data[column] for column in CSV_COLUMNS}


@dataclass
class RunConfig:
    command: str = 'solve'
    order: int = 2
    orders: List[int] = field(default_factory=list)
    base_cells: Tuple[int, int, int] = (2, 2, 2)
    refine: int = 1
    extents: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    assembly: str = 'paop'
    assemblies: List[str] = field(default_factory=list)
    kernel: Optional[str] = None
    preconditioner: str = 'gmg'
    preconditioners: List[str] = field(default_factory=list)
    lam: float = 1.0
    mu: float = 1.0
    material_file: Optional[str] = None
    bc_faces: Tuple[str, ...] = ('x-min',)
    bc_components: Tuple[str, ...] = ('x', 'y', 'z')
    body_force: Tuple[float, float, float] = (0.0, 0.0, -1.0)
    rel_tol: float = 1e-8
    max_iters: int = 500
    cheby_order: int = 3
    smooth_steps: int = 1
    dof_budget: Optional[int] = None
    levels: int = 4
    csv: Optional[str] = None
    vtk: Optional[str] = None
    seed: int = 0
    threads: int = 1
    fa_memory_cap: Optional[int] = None

    @property
    def mesh_levels(self) -> int:
        return self.refine + 1
