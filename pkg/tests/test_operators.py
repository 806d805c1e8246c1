import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlalm.errors import ConfigurationError, ConvergenceError, ShapeError
from rlalm.operators import (
    FD_DIRECTIONS,
    CountingOperator,
    DiagonalMajorizer,
    FiniteDifference,
    IdentityOperator,
    MatrixOperator,
    OperationCounter,
    ParallelBeamGeometry,
    ParallelBeamProjector,
    apply,
    apply_adjoint,
    diag_majorizer_ata,
    finite_difference_op,
    load_dense_matrix,
    max_eigenvalue,
    save_dense_matrix,
)


def adjoint_mismatch(op, rng, pairs=20):
    worst = 0.0
    for _ in range(pairs):
        x = rng.standard_normal(op.domain_dim)
        y = rng.standard_normal(op.range_dim)
        ax, aty = op.apply(x), op.adjoint(y)
        scale = np.linalg.norm(ax) * np.linalg.norm(y) + np.linalg.norm(x) * np.linalg.norm(aty)
        worst = max(worst, abs(ax @ y - x @ aty) / max(scale, 1e-300))
    return worst


@pytest.fixture(scope="module")
def small_projector():
    return ParallelBeamProjector(ParallelBeamGeometry(nx=12, ny=10, pixel_size=2.0, num_views=15))


def test_identity_apply_and_adjoint():
    op = IdentityOperator(2)
    assert np.array_equal(apply(op, [1.0, 2.0]), [1.0, 2.0])
    assert np.array_equal(apply_adjoint(op, [5.0, -1.0]), [5.0, -1.0])


def test_dense_apply_and_adjoint_by_hand():
    op = MatrixOperator([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(op.apply([1.0, 1.0]), [3.0, 7.0])
    assert np.array_equal(op.adjoint([1.0, 0.0]), [1.0, 2.0])


def test_zero_in_zero_out(small_projector):
    for op in (IdentityOperator(3), MatrixOperator(np.ones((2, 3))), small_projector, FiniteDifference((4, 5), (1, -1))):
        assert not np.any(op.apply(np.zeros(op.domain_dim)))
        assert not np.any(op.adjoint(np.zeros(op.range_dim)))


def test_shape_errors():
    op = MatrixOperator(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        op.apply(np.ones(2))
    with pytest.raises(ShapeError):
        op.adjoint(np.ones(3))


@given(
    a=st.floats(-5, 5),
    b=st.floats(-5, 5),
    seed=st.integers(0, 2**32 - 1),
)
@settings(max_examples=30, deadline=None)
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    op = MatrixOperator(rng.standard_normal((4, 3)))
    x1, x2 = rng.standard_normal(3), rng.standard_normal(3)
    lhs = op.apply(a * x1 + b * x2)
    rhs = a * op.apply(x1) + b * op.apply(x2)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_adjoint_consistency_all_realizations(small_projector):
    rng = np.random.default_rng(1)
    ops = [
        IdentityOperator(7),
        MatrixOperator(rng.standard_normal((9, 4))),
        small_projector,
        small_projector.scale_rows(rng.random(small_projector.range_dim)),
    ] + [FiniteDifference((8, 8), d) for d in FD_DIRECTIONS]
    for op in ops:
        assert adjoint_mismatch(op, rng) <= 1e-10


def test_diag_majorizer_by_hand():
    assert np.array_equal(diag_majorizer_ata(IdentityOperator(3)).entries, np.ones(3))
    d = diag_majorizer_ata(MatrixOperator([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(d.entries, [24.0, 34.0])


def test_diag_majorizer_weighted_matches_dense_oracle():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((6, 4))
    w = rng.random(6)
    oracle = np.abs(a).T @ np.diag(w) @ np.abs(a) @ np.ones(4)
    assert np.allclose(diag_majorizer_ata(MatrixOperator(a), w).entries, oracle, rtol=1e-14)


def test_diag_majorizer_rejects_negative_weights():
    with pytest.raises(ConfigurationError):
        diag_majorizer_ata(IdentityOperator(2), [1.0, -1.0])


def test_majorization_on_random_probes(small_projector):
    rng = np.random.default_rng(3)
    op = small_projector
    w = np.exp(-rng.random(op.range_dim) * 5)
    d = diag_majorizer_ata(op, w)
    scale = d.entries.max()
    for _ in range(200):
        x = rng.standard_normal(op.domain_dim)
        ax = op.apply(x)
        assert d.quad_form(x) - ax @ (w * ax) >= -1e-9 * (x @ x) * scale


def test_majorizer_validation():
    with pytest.raises(ConfigurationError):
        DiagonalMajorizer([1.0, -0.5])
    with pytest.raises(ConfigurationError):
        DiagonalMajorizer([np.inf])


def test_max_eigenvalue_known_spectra():
    assert max_eigenvalue(IdentityOperator(5)) == pytest.approx(1.0, rel=1e-12)
    op = MatrixOperator(np.diag(np.sqrt([1.0, 2.0, 3.0])))
    assert max_eigenvalue(op) == pytest.approx(3.0, rel=1e-6)


def test_max_eigenvalue_eigh_oracle():
    a = np.random.default_rng(4).standard_normal((20, 10))
    oracle = np.linalg.eigvalsh(a.T @ a)[-1]
    assert max_eigenvalue(MatrixOperator(a), tol=1e-12, max_iter=10000) == pytest.approx(oracle, rel=1e-6)


def test_max_eigenvalue_reports_estimate_on_failure():
    a = np.random.default_rng(5).standard_normal((20, 10))
    with pytest.raises(ConvergenceError) as info:
        max_eigenvalue(MatrixOperator(a), tol=1e-15, max_iter=2)
    assert info.value.estimate > 0


def test_max_eigenvalue_below_majorizer(small_projector):
    lam = max_eigenvalue(small_projector, tol=1e-10, max_iter=5000)
    assert lam <= diag_majorizer_ata(small_projector).entries.max() * (1 + 1e-9)


def test_finite_difference_definition():
    op = finite_difference_op((2, 1), (1, 0))
    assert op.shape == (1, 2)
    assert np.array_equal(op.apply([3.0, 5.0]), [-2.0])
    const = FiniteDifference((5, 6), (1, 1))
    assert not np.any(const.apply(np.full(30, 7.0)))


def test_finite_difference_brute_force():
    rng = np.random.default_rng(6)
    img = rng.standard_normal((5, 4))
    for d in FD_DIRECTIONS:
        expected = [
            img[i, j] - img[i + d[0], j + d[1]]
            for i in range(5)
            for j in range(4)
            if 0 <= i + d[0] < 5 and 0 <= j + d[1] < 4
        ]
        assert np.allclose(FiniteDifference((5, 4), d).apply(img.ravel()), expected)


def test_finite_difference_errors():
    with pytest.raises(ShapeError):
        FiniteDifference((0, 3), (1, 0))
    with pytest.raises(ConfigurationError):
        FiniteDifference((3, 3), (2, 0))


def test_projector_line_lengths():
    # horizontal ray through the middle row crosses every pixel of that row
    g = ParallelBeamGeometry(nx=4, ny=4, pixel_size=1.0, num_bins=4, num_views=2)
    op = ParallelBeamProjector(g)
    sino = op.apply(np.ones(16)).reshape(2, 4)
    assert np.allclose(sino, 4.0)
    # total length per view equals the image area for unit detector spacing
    assert np.allclose(sino.sum(axis=1), 16.0)


def _chord_through_box(t, theta, half_x, half_y):
    """Length of the line ``t (cos, sin) + s (-sin, cos)`` inside a centered box."""
    c, s_ = np.cos(theta), np.sin(theta)
    lo, hi = -np.inf, np.inf
    for p0, d, half in ((t * c, -s_, half_x), (t * s_, c, half_y)):
        if abs(d) < 1e-15:
            if abs(p0) > half:
                return 0.0
            continue
        a, b = sorted(((-half - p0) / d, (half - p0) / d))
        lo, hi = max(lo, a), min(hi, b)
    return max(hi - lo, 0.0)


def test_projector_uniform_image_matches_chord_oracle():
    g = ParallelBeamGeometry(nx=8, ny=6, pixel_size=1.5, num_views=7)
    sino = ParallelBeamProjector(g).apply(np.ones(48)).reshape(7, g.num_bins)
    oracle = np.array(
        [[_chord_through_box(t, th, 6.0, 4.5) for t in g.bin_centers] for th in g.angles]
    )
    assert np.allclose(sino, oracle, atol=1e-12)


def test_geometry_invariants():
    g = ParallelBeamGeometry(nx=16, ny=16, pixel_size=2.0, num_views=30)
    assert np.all(np.diff(g.angles) > 0) and g.angles[0] == 0 and g.angles[-1] < np.pi
    assert g.bin_spacing == 2.0 and g.num_bins == 25
    with pytest.raises(ConfigurationError):
        ParallelBeamGeometry(nx=0, ny=4)


def test_counting_operator_shares_counter():
    counter = OperationCounter()
    base = MatrixOperator(np.eye(4))
    op = CountingOperator(base, counter)
    sub = op.rows([0, 1])
    op.apply(np.ones(4))
    sub.adjoint(np.ones(2))
    sub.abs_adjoint(np.ones(2))
    assert counter.snapshot() == (1, 1)


def test_dense_matrix_roundtrip(tmp_path):
    a = np.random.default_rng(7).standard_normal((3, 5))
    path = tmp_path / "a.txt"
    save_dense_matrix(path, a)
    assert path.read_text().splitlines()[0] == "3 5"
    assert np.array_equal(load_dense_matrix(path).toarray(), a)
    path.write_text("2 2\n1 2 3\n")
    with pytest.raises(ShapeError):
        load_dense_matrix(path)
