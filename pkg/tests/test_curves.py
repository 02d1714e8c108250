import numpy as np
import pytest

from gmam.curves import (
    Curve,
    gap_deviation,
    init_curve,
    read_curve_csv,
    redistribute,
    write_curve_csv,
)
from gmam.errors import DegenerateEndpoints


class TestInitCurve:
    def test_three_point_segment(self):
        curve = init_curve([0.0, 0.0], [1.0, 0.0], 3)
        assert np.allclose(curve.points, [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])

    def test_spacing_1d(self):
        curve = init_curve([0.0], [2.0], 5)
        assert np.allclose(curve.chord_lengths(), 0.5)

    def test_coincident_endpoints_rejected(self):
        with pytest.raises(DegenerateEndpoints):
            init_curve([1.0, 2.0], [1.0, 2.0], 10)

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            init_curve([0.0], [1.0], 2)


class TestRedistribute:
    def test_equalizes_chord_gaps(self):
        # half-circle sampled very unevenly
        t = np.linspace(0.0, 1.0, 41) ** 3
        points = np.column_stack((np.cos(np.pi * t), np.sin(np.pi * t)))
        out = redistribute(Curve(points), tol=1e-6)
        assert gap_deviation(out.points) <= 1e-6

    def test_endpoints_bit_identical(self):
        rng = np.random.default_rng(5)
        points = np.cumsum(rng.standard_normal((30, 3)), axis=0)
        out = redistribute(Curve(points))
        assert out.points[0].tobytes() == points[0].tobytes()
        assert out.points[-1].tobytes() == points[-1].tobytes()

    def test_cubic_mode(self):
        t = np.linspace(0.0, 1.0, 41) ** 2
        points = np.column_stack((t, np.sin(2.0 * t)))
        out = redistribute(Curve(points), interpolation="cubic", tol=1e-6)
        assert gap_deviation(out.points) <= 1e-6

    def test_collapsed_curve_unchanged(self):
        points = np.ones((7, 2))
        out = redistribute(Curve(points))
        assert np.array_equal(out.points, points)


class TestCurveCsv:
    def test_roundtrip_lossless(self, tmp_path):
        rng = np.random.default_rng(11)
        curve = Curve(rng.standard_normal((17, 4)) * np.pi)
        path = tmp_path / "curve.csv"
        write_curve_csv(path, curve)
        back = read_curve_csv(path)
        assert back.points.tobytes() == curve.points.tobytes()

    def test_row_count_and_header(self, tmp_path):
        curve = init_curve([0.0, 1.0], [1.0, 3.0], 12)
        path = tmp_path / "curve.csv"
        write_curve_csv(path, curve)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "alpha,x_1,x_2"
        assert len(lines) == 13

    def test_reader_rejects_other_files(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("V,v,S\n1,2,3\n")
        with pytest.raises(ValueError):
            read_curve_csv(path)
