import pytest

from src.utils import flop_model
from src.utils.benchmark import storage_table
from src.utils.errors import InvalidArgumentError

ORDERS = range(1, 9)


def test_baseline_kernel2_flops_for_linear_elements():
    # 3 components x 8 nodes x 3 directions x 8 points, one FMA each
    assert flop_model.pa_kernel2_flops(1, 2) == 1152


def test_paop_flops_scale_like_fourth_power():
    ratios = [flop_model.element_flops('fused', p, p + 1) / (p + 1) ** 4 for p in ORDERS]
    assert max(ratios) / min(ratios) <= 3.0


def test_pa_to_paop_ratio_at_high_order():
    pa = flop_model.element_flops('baseline', 8, 9)
    paop = flop_model.element_flops('fused', 8, 9)
    assert pa / paop >= 10.0


def test_pa_ratio_between_orders_tracks_sixth_power():
    # (p+1)^6 growth: 9^6 / 3^6 = 729 against the per-element flop ratio
    r = flop_model.element_flops('baseline', 8, 9) / flop_model.element_flops('baseline', 2, 3)
    assert 500 <= r <= 729


@pytest.mark.parametrize('p', ORDERS)
def test_baseline_is_memory_bound(p):
    assert flop_model.stage_intensity('baseline', p, p + 1) <= 2.0


def test_paop_intensity_strictly_increases():
    oi = [flop_model.stage_intensity('fused', p, p + 1) for p in range(2, 9)]
    assert all(b > a for a, b in zip(oi, oi[1:]))


@pytest.mark.parametrize('p', range(2, 9))
def test_ablation_stages_never_add_flops(p):
    counts = flop_model.counts_table([p])[p]
    flops = [counts[stage] for stage in flop_model.KERNEL_STAGES]
    assert all(b <= a for a, b in zip(flops, flops[1:]))


def test_stage_monotonicity_starts_at_quadratic_elements():
    for p in ORDERS:
        assert flop_model.ablation_is_monotone(p) == (p >= flop_model.ABLATION_MONOTONE_FROM)
        assert flop_model.ablation_is_monotone(p, isotropic=False) == (p >= flop_model.ABLATION_MONOTONE_FROM)


def test_sum_factorization_alone_cuts_flops_at_high_order():
    counts = flop_model.counts_table([8])[8]
    assert counts['baseline'] / counts['sumfac'] >= 5.0


def test_anisotropic_points_cost_more():
    for stage in flop_model.KERNEL_STAGES:
        assert flop_model.point_flops(stage, isotropic=False) > flop_model.point_flops(stage)


def test_fa_nnz_single_linear_cell():
    assert flop_model.fa_nnz((1, 1, 1), 1) == 24 * 24


def test_fa_storage_grows_while_paop_stays_flat():
    table = storage_table([2, 8], levels=2).set_index('p')
    assert table.loc[2, 'ndof'] == table.loc[8, 'ndof'] == 14739
    assert table.loc[8, 'fa_bytes'] / table.loc[2, 'fa_bytes'] >= 4.0
    ratio = table.loc[8, 'paop_bytes'] / table.loc[2, 'paop_bytes']
    assert 1 / 1.5 <= ratio <= 1.5


def test_fused_stage_reads_no_quadrature_arrays():
    p, q = 4, 5
    assert flop_model.element_bytes('fused', p, q) < flop_model.element_bytes('voigt', p, q)
    assert flop_model.pa_stored_bytes('fused', p, q, 100, 3000) < flop_model.pa_stored_bytes('voigt', p, q, 100, 3000)


def test_unknown_stage_rejected():
    with pytest.raises(InvalidArgumentError):
        flop_model.point_flops('magic')
    with pytest.raises(InvalidArgumentError):
        flop_model.element_flops('fused', 0, 1)
