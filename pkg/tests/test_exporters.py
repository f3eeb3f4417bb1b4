import numpy as np
import pytest

from src.data.exporters import emit_convergence_csv, emit_csv, emit_vtk, read_csv
from src.data.material_config import load_material, parse_stiffness
from src.models.material import isotropic_stiffness
from src.models.records import CSV_COLUMNS, BenchRecord, ConvergenceRow
from src.utils.errors import InvalidArgumentError
from src.utils.problem import coordinate_field
from tests.conftest import make_space, random_spd_stiffness


def sample_record(variant='paop', p=2):
    return BenchRecord(variant, p, 2, 375, iters=9, setup_s=0.1, solve_s=0.2, apply_s=0.15, total_s=0.3,
                       flops=123456, bytes_model=7890, op_intensity=15.65, mdof_per_s=0.017, operator_bytes=4096)


def read_lines(path):
    with open(path) as f:
        return f.read().split('\n')


def test_empty_csv_is_header_only(tmp_path):
    path = emit_csv([], str(tmp_path / 'empty.csv'))
    lines = read_lines(path)
    assert lines[0] == ','.join(CSV_COLUMNS)
    assert lines[1:] == ['']


def test_single_record_csv(tmp_path):
    path = emit_csv([sample_record()], str(tmp_path / 'one.csv'))
    lines = [line for line in read_lines(path) if line]
    assert len(lines) == 2
    assert lines[1].startswith('paop,2,2,375,9,')
    df = read_csv(path)
    assert list(df.columns) == CSV_COLUMNS
    assert df.loc[0, 'flops'] == 123456


def test_oom_cells_are_literal(tmp_path):
    records = [BenchRecord.out_of_memory('fa', 8, 2, 14739, 5 * 1024 ** 3), sample_record()]
    path = emit_csv(records, str(tmp_path / 'sub' / 'bench.csv'))
    fa_line = read_lines(path)[1].split(',')
    row = dict(zip(CSV_COLUMNS, fa_line))
    for column in ('iters', 'setup_s', 'solve_s', 'apply_s', 'total_s', 'flops', 'bytes_model',
                   'op_intensity', 'mdof_per_s'):
        assert row[column] == 'OOM'
    assert int(row['operator_bytes']) == 5 * 1024 ** 3


def test_convergence_csv(tmp_path):
    rows = [ConvergenceRow(0, 0.5, 27, 1e-2), ConvergenceRow(1, 0.25, 125, 2.5e-3, 2.0)]
    df = read_csv(emit_convergence_csv(rows, str(tmp_path / 'rates.csv')))
    assert list(df.columns) == ['level', 'h', 'scalar_ndof', 'l2_error', 'rate']
    assert np.isnan(df.loc[0, 'rate'])
    assert df.loc[1, 'rate'] == pytest.approx(2.0)


def parse_vtk(path):
    lines = read_lines(path)
    dims = tuple(int(v) for v in lines[4].split()[1:])
    n = int(lines[5].split()[1])
    points = np.array([[float(v) for v in line.split()] for line in lines[6:6 + n]])
    assert lines[6 + n] == f'POINT_DATA {n}'
    assert lines[7 + n] == 'VECTORS displacement double'
    vectors = np.array([[float(v) for v in line.split()] for line in lines[8 + n:8 + 2 * n]])
    return dims, points, vectors


def test_vtk_of_zero_field(tmp_path):
    space = make_space(2, (2, 1, 1))
    dims, points, vectors = parse_vtk(emit_vtk(space, np.zeros(space.vector_ndof), str(tmp_path / 'u.vtk')))
    assert dims == (5, 3, 3)
    assert len(points) == space.scalar_ndof
    np.testing.assert_array_equal(vectors, 0.0)


def test_vtk_of_coordinate_field(tmp_path):
    space = make_space(3, (1, 2, 1), (2.0, 1.0, 0.5))
    path = emit_vtk(space, coordinate_field(space), str(tmp_path / 'x.vtk'))
    with open(path) as f:
        assert f.readline() == '# vtk DataFile Version 3.0\n'
    _, points, vectors = parse_vtk(path)
    np.testing.assert_array_equal(vectors, points)


def test_vtk_rejects_wrong_size(tmp_path):
    space = make_space(1, (1, 1, 1))
    with pytest.raises(InvalidArgumentError):
        emit_vtk(space, np.zeros(5), str(tmp_path / 'bad.vtk'))


def upper_triangle_text(C, sep=' '):
    return '\n'.join(sep.join(repr(float(C[i, j])) for j in range(i, 6)) for i in range(6))


def test_stiffness_file_round_trip(tmp_path):
    C = random_spd_stiffness(4)
    path = tmp_path / 'aniso.txt'
    path.write_text('# orthotropic-ish test material\n' + upper_triangle_text(C, sep=', ') + '\n')
    material = load_material(str(path))
    assert not material.is_isotropic
    np.testing.assert_allclose(material.C, C, rtol=1e-14, atol=1e-14 * np.abs(C).max())


def test_isotropic_stiffness_parses():
    C = isotropic_stiffness(2.0, 0.5)
    np.testing.assert_array_equal(parse_stiffness(upper_triangle_text(C)), C)


@pytest.mark.parametrize('text', ['1 2 3', '1 ' * 22, 'a ' + '1 ' * 20])
def test_malformed_stiffness_rejected(text):
    with pytest.raises(InvalidArgumentError):
        parse_stiffness(text)
