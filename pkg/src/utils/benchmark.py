import logging
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.settings import load_settings
from src.models.material import VoigtMaterial
from src.models.records import BenchRecord, RunConfig
from src.models.space import BcSpec
from src.utils import flop_model
from src.utils.errors import InvalidArgumentError, OperatorMemoryError, SolverError
from src.utils.problem import ElasticityProblem, SolveResult, constant_field, solve_problem

try:
    import resource
except ImportError:     # not available on Windows
    resource = None

logger = logging.getLogger(__name__)

DEFAULT_DOF_BUDGET = 3 * 17 ** 3
MAX_BASE_CELLS = 64


def peak_rss_bytes() -> Optional[int]:
    """Process high-water mark, or None where the platform does not expose it."""
    if resource is None:
        return None
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # kilobytes on Linux, bytes on macOS
    return int(peak) if sys.platform == 'darwin' else int(peak) * 1024


def finest_vector_ndof(p: int, base: int, levels: int) -> int:
    return 3 * (p * base * 2 ** (levels - 1) + 1) ** 3


def budget_base_cells(p: int, levels: int, dof_budget: int = DEFAULT_DOF_BUDGET) -> Tuple[int, int, int]:
    """Cubic base mesh whose finest level has the vector ndof closest to the budget."""
    if dof_budget <= 0:
        raise InvalidArgumentError(f"DoF budget must be positive, got {dof_budget}")
    best = min(range(1, MAX_BASE_CELLS + 1),
               key=lambda base: abs(finest_vector_ndof(p, base, levels) - dof_budget))
    return (best, best, best)


def problem_from_config(config: RunConfig, material: Optional[VoigtMaterial] = None) -> ElasticityProblem:
    return ElasticityProblem(
        extents=tuple(config.extents),
        material=material or VoigtMaterial(lam=config.lam, mu=config.mu),
        bc=BcSpec(tuple(config.bc_faces), tuple(config.bc_components)),
        body_force=constant_field(config.body_force),
    )


def record_from_result(variant: str, p: int, levels: int, result: SolveResult,
                       preconditioner: str) -> BenchRecord:
    counters = result.operator.counters()
    ndof = result.space.vector_ndof
    solve_s = result.timings['solve_s']
    iters = result.report.iterations
    return BenchRecord(
        variant=variant,
        p=p,
        levels=levels,
        ndof=ndof,
        iters=iters,
        setup_s=result.timings['setup_s'],
        solve_s=solve_s,
        apply_s=result.timings['apply_s'],
        total_s=result.timings['total_s'],
        flops=counters.flops,
        bytes_model=counters.bytes_model,
        op_intensity=counters.operational_intensity,
        mdof_per_s=ndof * iters / solve_s / 1e6 if solve_s > 0 else 0.0,
        operator_bytes=result.operator.stored_bytes(),
        preconditioner=preconditioner,
        peak_rss_bytes=peak_rss_bytes(),
    )


def check_iteration_parity(records: Sequence[BenchRecord]):
    """Variants sharing a preconditioner solve the same system, so their iteration counts must agree."""
    counts = {r.variant: r.iters for r in records if not r.is_oom}
    if len(set(counts.values())) > 1:
        raise SolverError(f"iteration counts differ across variants: {counts}")


def run_benchmark(config: RunConfig, material: Optional[VoigtMaterial] = None) -> List[BenchRecord]:
    """Solve the benchmark problem for every (preconditioner, p, variant) at a fixed DoF budget."""
    settings = load_settings()
    problem = problem_from_config(config, material)
    orders = config.orders or [config.order]
    variants = config.assemblies or [config.assembly]
    preconditioners = config.preconditioners or [config.preconditioner]
    levels = config.mesh_levels
    budget = config.dof_budget or DEFAULT_DOF_BUDGET
    cap = config.fa_memory_cap or settings.fa_memory_cap_bytes

    records: List[BenchRecord] = []
    for pc in preconditioners:
        for p in orders:
            base_cells = budget_base_cells(p, levels, budget)
            ndof = finest_vector_ndof(p, base_cells[0], levels)
            logger.info(f"p={p}: base mesh {base_cells}, {levels} levels, {ndof} DOFs, preconditioner {pc}")
            group = []
            for variant in variants:
                kernel = None if variant == 'fa' else config.kernel
                try:
                    result = solve_problem(
                        problem, p, base_cells, levels=levels, assembly=variant, kernel=kernel,
                        preconditioner=pc, rel_tol=config.rel_tol, max_iters=config.max_iters,
                        chebyshev_order=config.cheby_order, smoothing_steps=config.smooth_steps,
                        threads=config.threads, seed=config.seed, memory_cap_bytes=cap,
                    )
                except OperatorMemoryError as e:
                    logger.warning(f"{variant} p={p}: {e}")
                    group.append(BenchRecord.out_of_memory(variant, p, levels, ndof, e.estimate_bytes, pc))
                    continue
                record = record_from_result(variant, p, levels, result, pc)
                logger.info(f"{variant} p={p}: {record.iters} iterations, total {record.total_s:.3f}s, "
                            f"{record.mdof_per_s:.3f} MDoF/s, operator {record.operator_bytes / 1024 ** 2:.2f} MiB, "
                            f"peak RSS {format_bytes(record.peak_rss_bytes)}")
                group.append(record)
            check_iteration_parity(group)
            records.extend(group)
    return records


def format_bytes(value: Optional[int]) -> str:
    if value is None:
        return 'n/a'
    return f"{value / 1024 ** 2:.1f} MiB"


def records_frame(records: Sequence[BenchRecord]) -> pd.DataFrame:
    return pd.DataFrame([vars(r) for r in records])


def summarize(records: Sequence[BenchRecord]) -> pd.DataFrame:
    """Speedups against FA and PA, GFLOP/s, memory ratio against FA and the sweet-spot order per variant."""
    df = records_frame(records)
    if df.empty:
        return df
    rows = []
    for (pc, p), group in df.groupby(['preconditioner', 'p'], sort=True):
        by_variant = {r['variant']: r for _, r in group.iterrows()}
        fa = by_variant.get('fa')
        pa = by_variant.get('pa')
        for variant, r in by_variant.items():
            oom = r['iters'] == 'OOM'
            row = {
                'preconditioner': pc, 'p': p, 'variant': variant,
                'iters': r['iters'],
                'total_s': np.nan if oom else float(r['total_s']),
                'mdof_per_s': np.nan if oom else float(r['mdof_per_s']),
                'gflop_per_s': np.nan,
                'speedup_vs_fa': np.nan,
                'speedup_vs_pa': np.nan,
                'memory_vs_fa': np.nan,
            }
            if not oom and float(r['apply_s']) > 0:
                row['gflop_per_s'] = float(r['flops']) / float(r['apply_s']) / 1e9
            for ref, column in ((fa, 'speedup_vs_fa'), (pa, 'speedup_vs_pa')):
                if ref is not None and not oom and ref['iters'] != 'OOM' and row['total_s'] > 0:
                    row[column] = float(ref['total_s']) / row['total_s']
            if fa is not None and fa['operator_bytes'] > 0:
                row['memory_vs_fa'] = r['operator_bytes'] / fa['operator_bytes']
            rows.append(row)
    summary = pd.DataFrame(rows)
    best = summary.dropna(subset=['mdof_per_s'])
    if not best.empty:
        sweet = best.loc[best.groupby(['preconditioner', 'variant'])['mdof_per_s'].idxmax()]
        summary['sweet_spot'] = False
        summary.loc[sweet.index, 'sweet_spot'] = True
    return summary


def sweet_spots(summary: pd.DataFrame) -> Dict[str, int]:
    if summary.empty or 'sweet_spot' not in summary:
        return {}
    marked = summary[summary['sweet_spot']]
    return {f"{r['variant']}/{r['preconditioner']}": int(r['p']) for _, r in marked.iterrows()}


def ablation_table(orders: Sequence[int], isotropic: bool = True) -> pd.DataFrame:
    """Modeled per-element flops and intensity of every kernel stage, q = p + 1."""
    rows = []
    for p in orders:
        counts = flop_model.counts_table([p], isotropic)[p]
        baseline = counts['baseline']
        for stage in flop_model.KERNEL_STAGES:
            rows.append({
                'p': p,
                'stage': stage,
                'flops_per_element': counts[stage],
                'reduction_vs_baseline': baseline / counts[stage],
                'op_intensity': flop_model.stage_intensity(stage, p, p + 1, isotropic),
                'monotone': p >= flop_model.ABLATION_MONOTONE_FROM,
            })
    return pd.DataFrame(rows)


def storage_table(orders: Sequence[int], levels: int = 2, dof_budget: int = DEFAULT_DOF_BUDGET) -> pd.DataFrame:
    """Analytic operator storage of FA, PA and PAop at a fixed DoF budget."""
    rows = []
    for p in orders:
        base = budget_base_cells(p, levels, dof_budget)[0]
        cells = base * 2 ** (levels - 1)
        ndof = finest_vector_ndof(p, base, levels)
        num_elements = cells ** 3
        rows.append({
            'p': p,
            'ndof': ndof,
            'fa_bytes': flop_model.fa_stored_bytes(flop_model.fa_nnz((cells,) * 3, p), ndof),
            'pa_bytes': flop_model.pa_stored_bytes('baseline', p, p + 1, num_elements, ndof),
            'paop_bytes': flop_model.pa_stored_bytes('fused', p, p + 1, num_elements, ndof),
        })
    return pd.DataFrame(rows)
