#!/usr/bin/env python3
"""
High-Order Elasticity Solver
3D linear elasticity on box meshes with Full Assembly, Partial Assembly and
fused sum-factorized (PAop) operators, preconditioned CG, verification and
benchmark runs.

Subcommands: solve, bench, converge, verify
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import argparse
import logging
import traceback
from datetime import datetime
from typing import List, Optional

import numpy as np

from config.settings import load_settings
from src.data.exporters import emit_convergence_csv, emit_csv, emit_vtk
from src.data.material_config import load_material
from src.models.material import VoigtMaterial
from src.models.mesh import BoundaryAttribute, build_cartesian_mesh
from src.models.records import RunConfig
from src.models.space import BcSpec, build_space
from src.utils.benchmark import (
    ablation_table,
    problem_from_config,
    record_from_result,
    run_benchmark,
    storage_table,
    summarize,
    sweet_spots,
)
from src.utils.errors import ElasticityError, InvalidArgumentError
from src.utils.flop_model import ABLATION_MONOTONE_FROM, KERNEL_STAGES
from src.utils.problem import PRECONDITIONERS, solve_problem
from src.utils.verification import (
    convergence_study,
    format_convergence,
    operator_equivalence,
    patch_fields,
    patch_test,
    sine_case,
)

ASSEMBLIES = ('fa', 'pa', 'paop')
MIN_ORDER, MAX_ORDER = 1, 8

logger = logging.getLogger(__name__)


def setup_logging(log_dir: str = 'logs', level: str = 'INFO', command: str = 'solve'):
    """Setup logging configuration"""
    os.makedirs(log_dir, exist_ok=True)

    # One log file per command and day
    log_date = datetime.now().strftime('%Y-%m-%d')
    log_file = os.path.join(log_dir, f'elasticity_{command}_{log_date}.log')

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler()
        ]
    )
    return logging.getLogger(__name__)


def order_type(value: str) -> int:
    try:
        p = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"order must be an integer, got {value!r}")
    if not MIN_ORDER <= p <= MAX_ORDER:
        raise argparse.ArgumentTypeError(f"order must be in [{MIN_ORDER}, {MAX_ORDER}], got {p}")
    return p


def order_list(value: str) -> List[int]:
    return [order_type(v) for v in value.split(',') if v.strip()]


def choice_list(choices):
    def parse(value: str) -> List[str]:
        items = [v.strip() for v in value.split(',') if v.strip()]
        for item in items:
            if item not in choices:
                raise argparse.ArgumentTypeError(f"invalid choice {item!r} (choose from {', '.join(choices)})")
        return items
    return parse


def triple(kind):
    def parse(value: str):
        items = [kind(v) for v in value.split(',')]
        if len(items) == 1:
            items = items * 3
        if len(items) != 3:
            raise argparse.ArgumentTypeError(f"expected 1 or 3 comma-separated values, got {value!r}")
        return tuple(items)
    return parse


def positive_int(value: str) -> int:
    n = int(value)
    if n <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value!r}")
    return n


def face_list(value: str):
    faces = tuple(v.strip() for v in value.split(',') if v.strip())
    for face in faces:
        try:
            BoundaryAttribute.from_label(face)
        except (KeyError, ValueError, InvalidArgumentError):
            raise argparse.ArgumentTypeError(f"unknown face {face!r}")
    return faces


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--order', '-p', type=order_type, default=2, help='Polynomial order (1-8)')
    common.add_argument('--orders', type=order_list, default=[], help='Comma-separated orders (bench, converge, verify)')
    common.add_argument('--cells', type=triple(positive_int), default=(2, 2, 2), help='Base cells per axis: N or Nx,Ny,Nz')
    common.add_argument('--refine', type=int, default=1, help='Uniform refinements of the base mesh')
    common.add_argument('--extents', type=triple(float), default=(1.0, 1.0, 1.0), help='Box extents: L or Lx,Ly,Lz')
    common.add_argument('--assembly', choices=ASSEMBLIES, default='paop', help='Operator variant')
    common.add_argument('--assemblies', type=choice_list(ASSEMBLIES), default=[], help='Variants for bench')
    common.add_argument('--kernel', choices=KERNEL_STAGES, default=None, help='Partial-assembly kernel stage')
    common.add_argument('--pc', choices=PRECONDITIONERS, default='gmg', help='Preconditioner')
    common.add_argument('--pcs', type=choice_list(PRECONDITIONERS), default=[], help='Preconditioners for bench')
    common.add_argument('--lambda', '--lam', dest='lam', type=float, default=1.0, help='Lame lambda')
    common.add_argument('--mu', type=float, default=1.0, help='Lame mu')
    common.add_argument('--material-file', default=None, help='21 upper-triangle Voigt stiffness values')
    common.add_argument('--bc-faces', type=face_list, default=('x-min',), help='Clamped faces, e.g. x-min,y-max')
    common.add_argument('--bc-components', type=choice_list(('x', 'y', 'z')), default=['x', 'y', 'z'],
                        help='Constrained displacement components')
    common.add_argument('--body-force', type=triple(float), default=(0.0, 0.0, -1.0), help='Constant body force fx,fy,fz')
    common.add_argument('--rel-tol', type=float, default=1e-8, help='CG relative tolerance')
    common.add_argument('--max-iters', type=positive_int, default=500, help='CG iteration limit')
    common.add_argument('--cheby-order', type=positive_int, default=3, help='Chebyshev smoother degree')
    common.add_argument('--smooth-steps', type=positive_int, default=1, help='Pre/post smoothing steps')
    common.add_argument('--dof-budget', type=positive_int, default=None, help='Target vector DoFs for bench')
    common.add_argument('--levels', type=positive_int, default=4, help='Refinement levels for converge')
    common.add_argument('--csv', default=None, help='CSV output path')
    common.add_argument('--vtk', default=None, help='VTK output path (solve)')
    common.add_argument('--seed', type=int, default=0, help='RNG seed')
    common.add_argument('--threads', type=positive_int, default=None, help='Worker threads for operator kernels')
    common.add_argument('--fa-memory-cap', type=positive_int, default=None, help='Full Assembly cap in bytes')

    parser = argparse.ArgumentParser(description='High-order matrix-free elasticity solver')
    subparsers = parser.add_subparsers(dest='command', required=True)
    subparsers.add_parser('solve', parents=[common], help='Solve the benchmark problem once')
    subparsers.add_parser('bench', parents=[common], help='Compare variants at a fixed DoF budget')
    subparsers.add_parser('converge', parents=[common], help='h-convergence study on a manufactured solution')
    subparsers.add_parser('verify', parents=[common], help='Patch tests, operator equivalence and rates')
    return parser


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    """Parse and validate arguments; usage errors exit with status 2."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.kernel is not None and (args.assembly == 'fa' or 'fa' in args.assemblies):
        parser.error("--kernel selects a partial-assembly stage and cannot be combined with --assembly fa")
    if args.refine < 0:
        parser.error("--refine must be >= 0")
    if args.rel_tol <= 0:
        parser.error("--rel-tol must be positive")
    if args.material_file is not None and not os.path.isfile(args.material_file):
        parser.error(f"material file not found: {args.material_file}")

    settings = load_settings()
    return RunConfig(
        command=args.command,
        order=args.order,
        orders=list(args.orders),
        base_cells=tuple(args.cells),
        refine=args.refine,
        extents=tuple(args.extents),
        assembly=args.assembly,
        assemblies=list(args.assemblies),
        kernel=args.kernel,
        preconditioner=args.pc,
        preconditioners=list(args.pcs),
        lam=args.lam,
        mu=args.mu,
        material_file=args.material_file,
        bc_faces=tuple(args.bc_faces),
        bc_components=tuple(args.bc_components),
        body_force=tuple(args.body_force),
        rel_tol=args.rel_tol,
        max_iters=args.max_iters,
        cheby_order=args.cheby_order,
        smooth_steps=args.smooth_steps,
        dof_budget=args.dof_budget,
        levels=args.levels,
        csv=args.csv,
        vtk=args.vtk,
        seed=args.seed,
        threads=args.threads or settings.default_threads,
        fa_memory_cap=args.fa_memory_cap,
    )


def material_for(config: RunConfig) -> VoigtMaterial:
    if config.material_file:
        return load_material(config.material_file)
    return VoigtMaterial(lam=config.lam, mu=config.mu)


def step(title: str):
    logger.info("=" * 60)
    logger.info(title)
    logger.info("=" * 60)


def run_solve(config: RunConfig) -> bool:
    step(f"SOLVE: {config.assembly.upper()} p={config.order}, {config.mesh_levels} levels, pc={config.preconditioner}")
    problem = problem_from_config(config, material_for(config))
    result = solve_problem(
        problem, config.order, config.base_cells, levels=config.mesh_levels,
        assembly=config.assembly, kernel=config.kernel, preconditioner=config.preconditioner,
        rel_tol=config.rel_tol, max_iters=config.max_iters, chebyshev_order=config.cheby_order,
        smoothing_steps=config.smooth_steps, threads=config.threads, seed=config.seed,
        memory_cap_bytes=config.fa_memory_cap,
    )
    record = record_from_result(config.assembly, config.order, config.mesh_levels, result, config.preconditioner)
    logger.info(f"DOFs: {record.ndof}")
    logger.info(f"Iterations: {record.iters} (converged: {result.report.converged})")
    logger.info(f"Setup {record.setup_s:.3f}s, solve {record.solve_s:.3f}s, apply {record.apply_s:.3f}s")
    logger.info(f"Counted flops {record.flops}, modeled bytes {record.bytes_model}, OI {record.op_intensity:.3f}")
    logger.info(f"Operator storage: {record.operator_bytes / 1024 ** 2:.2f} MiB")
    logger.info(f"Max |u|: {np.max(np.abs(result.solution)):.6e}")
    if config.csv:
        emit_csv([record], config.csv)
    if config.vtk:
        emit_vtk(result.space, result.solution, config.vtk)
    if result.report.converged:
        logger.info("✅ Solve converged")
    else:
        logger.error(f"❌ Solve stopped at relative residual {result.report.final_relative_residual:.2e}")
    return result.report.converged


def run_bench(config: RunConfig) -> bool:
    orders = config.orders or [config.order]
    step(f"BENCHMARK: orders {orders}, variants {config.assemblies or [config.assembly]}")
    records = run_benchmark(config, material_for(config) if config.material_file else None)
    if config.csv:
        emit_csv(records, config.csv)

    summary = summarize(records)
    step("📊 BENCHMARK SUMMARY")
    if not summary.empty:
        logger.info("\n" + summary.to_string(index=False, float_format=lambda v: f'{v:.3f}'))
    for key, p in sweet_spots(summary).items():
        logger.info(f"Sweet spot {key}: p={p}")
    logger.info("\n" + ablation_table(orders).to_string(index=False, float_format=lambda v: f'{v:.3f}'))
    if min(orders) < ABLATION_MONOTONE_FROM:
        logger.info(f"ℹ️ Stage flops are non-increasing only for p >= {ABLATION_MONOTONE_FROM}; "
                    f"linear elements pay for per-point geometry")
    logger.info("\n" + storage_table(orders, config.mesh_levels, config.dof_budget or 3 * 17 ** 3).to_string(index=False))
    oom = [r for r in records if r.is_oom]
    for r in oom:
        logger.warning(f"⚠️ {r.variant} p={r.p}: OOM (estimated {r.operator_bytes / 1024 ** 2:.1f} MiB)")
    logger.info(f"✅ {len(records) - len(oom)} runs completed, {len(oom)} OOM")
    return True


def run_converge(config: RunConfig) -> bool:
    orders = config.orders or [config.order]
    case = sine_case(config.lam, config.mu)
    ok = True
    for p in orders:
        step(f"CONVERGENCE: p={p}, {config.levels} levels")
        rows = convergence_study(case, p, config.levels, threads=config.threads)
        logger.info("\n" + format_convergence(rows))
        if config.csv:
            path = config.csv if len(orders) == 1 else config.csv.replace('.csv', f'_p{p}.csv')
            emit_convergence_csv(rows, path)
        rate = rows[-1].rate
        if rate is not None and rate >= p + 0.7:
            logger.info(f"✅ p={p}: terminal rate {rate:.3f}")
        elif rate is not None:
            logger.error(f"❌ p={p}: terminal rate {rate:.3f} below {p + 0.7:.1f}")
            ok = False
    return ok


def run_verify(config: RunConfig) -> bool:
    orders = config.orders or [1, 2, 3, 4]
    material = material_for(config)
    results = {}

    step("STEP 1: PATCH TESTS")
    for p in orders:
        space = build_space(build_cartesian_mesh((1.0, 1.0, 1.0), (2, 2, 2)), p)
        for fields in patch_fields(p):
            passed, error = patch_test(space, material, BcSpec.all_faces(), fields)
            results[f"patch p={p} u=({', '.join(fields)})"] = passed
            logger.info(f"{'✅' if passed else '❌'} p={p} u=({', '.join(fields)}): error {error:.2e}")

    step("STEP 2: OPERATOR EQUIVALENCE")
    for p in orders:
        space = build_space(build_cartesian_mesh((1.0, 1.0, 1.0), (2, 2, 2)), p)
        worst = operator_equivalence(space, material, samples=5, seed=config.seed)
        results[f"equivalence p={p}"] = worst <= 1e-12
        logger.info(f"{'✅' if worst <= 1e-12 else '❌'} p={p}: max relative difference {worst:.2e}")

    step("STEP 3: CONVERGENCE RATES")
    case = sine_case()
    for p in [p for p in orders if p <= 3]:
        rows = convergence_study(case, p, min(config.levels, 4), threads=config.threads)
        rate = rows[-1].rate
        results[f"rate p={p}"] = rate is not None and rate >= p + 0.7
        logger.info("\n" + format_convergence(rows))

    step("📊 VERIFICATION SUMMARY")
    for name, passed in results.items():
        logger.info(f"  {name}: {'✅ SUCCESS' if passed else '❌ FAILED'}")
    all_success = all(results.values())
    if all_success:
        logger.info("🎉 ALL CHECKS PASSED")
    else:
        failed = [name for name, passed in results.items() if not passed]
        logger.warning(f"⚠️ SOME CHECKS FAILED: {', '.join(failed)}")
    return all_success


COMMANDS = {
    'solve': run_solve,
    'bench': run_bench,
    'converge': run_converge,
    'verify': run_verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    config = parse_config(argv)
    settings = load_settings()
    setup_logging(settings.log_dir, settings.log_level, config.command)

    start_time = datetime.now()
    logger.info(f"🚀 {config.command.upper()} started at {start_time}")
    try:
        ok = COMMANDS[config.command](config)
    except InvalidArgumentError as e:
        logger.error(f"❌ Invalid configuration: {e}")
        return 2
    except (ElasticityError, OSError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        logger.debug(traceback.format_exc())
        return 1
    logger.info(f"Duration: {datetime.now() - start_time}")
    return 0 if ok else 1


if __name__ == '__main__':
    sys.exit(main())
