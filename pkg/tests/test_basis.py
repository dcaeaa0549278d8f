import numpy as np
import pytest

from app.exceptions import ConfigurationError, DomainError
from app.models import BasisSpec
from app.services.basis import (
    bspline_design,
    coefficient_positions,
    difference_matrix,
    difference_positions,
    domain_of,
    make_knots,
    tensor_design,
)
from tests.helpers import cox_de_boor


class TestBasisSpec:
    def test_basis_size(self):
        spec = BasisSpec(xmin=0.0, xmax=1.0, nseg=197, degree=3)
        assert spec.n_basis == 200

    @pytest.mark.parametrize(
        "kwargs, fragment",
        [
            ({"xmin": 1.0, "xmax": 1.0, "nseg": 5}, "xmax > xmin"),
            ({"xmin": 0.0, "xmax": 1.0, "nseg": 0}, "nseg >= 1"),
            ({"xmin": 0.0, "xmax": 1.0, "nseg": 5, "degree": 6}, "degree"),
            ({"xmin": 0.0, "xmax": 1.0, "nseg": 5, "diff_order": 0}, "diff_order >= 1"),
            ({"xmin": 0.0, "xmax": 1.0, "nseg": 1, "degree": 1, "diff_order": 2}, "basis size"),
        ],
    )
    def test_invalid_spec_names_invariant(self, kwargs, fragment):
        with pytest.raises(ConfigurationError, match=fragment):
            BasisSpec(**kwargs).check()


class TestKnots:
    def test_count_and_spacing(self):
        spec = BasisSpec(xmin=-2.0, xmax=3.0, nseg=10, degree=3)
        knots = make_knots(spec)
        assert knots.size == 10 + 2 * 3 + 1
        np.testing.assert_allclose(np.diff(knots), 0.5, atol=1e-12)
        assert knots[3] == -2.0
        assert knots[13] == 3.0


class TestDesign:
    def test_partition_of_unity(self, rng):
        for degree in range(6):
            spec = BasisSpec(xmin=0.0, xmax=2.0, nseg=9, degree=degree, diff_order=1)
            x = np.append(rng.uniform(0.0, 2.0, 300), [0.0, 2.0])
            B = bspline_design(x, spec).values
            assert B.shape == (302, 9 + degree)
            np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)
            assert B.min() >= 0.0

    def test_matches_cox_de_boor(self, rng):
        spec = BasisSpec(xmin=0.3, xmax=4.1, nseg=12, degree=3)
        x = np.append(rng.uniform(0.3, 4.1, 200), [0.3, 4.1])
        B = bspline_design(x, spec).values
        np.testing.assert_allclose(B, cox_de_boor(x, make_knots(spec), 3), atol=1e-12)

    def test_right_boundary_in_last_segment(self):
        spec = BasisSpec(xmin=0.0, xmax=1.0, nseg=4, degree=2)
        B = bspline_design([1.0], spec).values[0]
        assert B[-1] == pytest.approx(0.5)
        assert B.sum() == pytest.approx(1.0)

    def test_degree_zero_is_indicator(self):
        spec = BasisSpec(xmin=0.0, xmax=1.0, nseg=4, degree=0, diff_order=1)
        B = bspline_design([0.1, 0.3, 0.6, 1.0], spec).values
        np.testing.assert_array_equal(B, np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]))

    def test_local_support(self):
        spec = BasisSpec(xmin=0.0, xmax=1.0, nseg=20, degree=3)
        B = bspline_design(np.linspace(0.0, 1.0, 101), spec).values
        assert np.all(np.count_nonzero(B > 0, axis=1) <= 4)

    def test_outside_domain_reports_index(self):
        spec = BasisSpec(xmin=0.0, xmax=1.0, nseg=5)
        with pytest.raises(DomainError) as err:
            bspline_design([0.5, 0.2, 1.5, 2.0], spec)
        assert err.value.index == 2

    def test_rounding_at_boundary_tolerated(self):
        spec = BasisSpec(xmin=0.0, xmax=1.0, nseg=5)
        B = bspline_design([1.0 + 1e-13, -1e-13], spec).values
        np.testing.assert_allclose(B.sum(axis=1), 1.0)

    def test_invalid_spec_rejected(self):
        with pytest.raises(ConfigurationError):
            bspline_design([0.5], BasisSpec(xmin=1.0, xmax=0.0, nseg=5))


class TestDifferenceMatrix:
    @pytest.mark.parametrize("q", [1, 2, 3, 4])
    def test_annihilates_low_degree_polynomials(self, q, rng):
        c = 15
        D = difference_matrix(c, q)
        assert D.values.shape == (c - q, c)
        j = np.arange(c, dtype=float)
        for degree in range(q):
            poly = np.polynomial.polynomial.polyval(j, rng.standard_normal(degree + 1))
            np.testing.assert_allclose(D.values @ poly, 0.0, atol=1e-8)
        assert np.abs(D.values @ j**q).max() > 0

    def test_rows_are_binomial(self):
        np.testing.assert_array_equal(difference_matrix(5, 2).values[0], [1, -2, 1, 0, 0])

    def test_matches_numpy_diff(self, rng):
        theta = rng.standard_normal(12)
        np.testing.assert_allclose(difference_matrix(12, 3).values @ theta, np.diff(theta, n=3))

    @pytest.mark.parametrize("c, q", [(3, 3), (5, 0)])
    def test_invalid(self, c, q):
        with pytest.raises(ConfigurationError):
            difference_matrix(c, q)


class TestTensorDesign:
    def test_dimension_one_fastest(self, rng):
        s1 = BasisSpec(xmin=0.0, xmax=1.0, nseg=3)
        s2 = BasisSpec(xmin=0.0, xmax=1.0, nseg=4)
        x1, x2 = rng.uniform(size=30), rng.uniform(size=30)
        B1, B2 = bspline_design(x1, s1), bspline_design(x2, s2)
        T = tensor_design(B1, B2)
        assert T.shape == (30, 6 * 7)
        j1, j2 = 4, 5
        np.testing.assert_allclose(T[:, j1 + 6 * j2], B1.values[:, j1] * B2.values[:, j2])
        np.testing.assert_allclose(T.sum(axis=1), 1.0)

    def test_row_mismatch(self):
        spec = BasisSpec(xmin=0.0, xmax=1.0, nseg=3)
        with pytest.raises(ConfigurationError):
            tensor_design(bspline_design([0.1, 0.2], spec), bspline_design([0.1], spec))


class TestPositions:
    def test_cubic_coefficients_centred_on_support(self):
        spec = BasisSpec(xmin=0.0, xmax=1.0, nseg=10, degree=3)
        pos = coefficient_positions(spec)
        assert pos.size == 13
        # cubic B-spline j peaks at its support centre
        x = np.linspace(0.0, 1.0, 1001)
        B = cox_de_boor(x, make_knots(spec), 3)
        peaks = x[np.argmax(B, axis=0)]
        np.testing.assert_allclose(pos[3:10], peaks[3:10], atol=1e-9)

    def test_difference_positions_between_coefficients(self):
        spec = BasisSpec(xmin=0.0, xmax=1.0, nseg=10, degree=3, diff_order=2)
        c, d = coefficient_positions(spec), difference_positions(spec)
        assert d.size == 11
        np.testing.assert_allclose(d, c[1:-1])


class TestDomain:
    def test_range_and_pad(self):
        assert domain_of([2.0, 1.0, 3.0]) == (1.0, 3.0)
        assert domain_of([0.0, 1.0], pad=0.1) == pytest.approx((-0.1, 1.1))

    def test_constant_covariate(self):
        with pytest.raises(ConfigurationError, match="constant"):
            domain_of([1.0, 1.0, 1.0])
