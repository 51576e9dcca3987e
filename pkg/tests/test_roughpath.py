import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughmkv import streams
from roughmkv.roughpath import (GridRoughPath, chen_defect, check_alpha, coarsen, holder_norms, ito_lift,
                                lift_smooth, load_text, rp_distance, save_text)


def _brownian_lift(seed, K=32, e=2, R=8, T=1.0):
    times = np.linspace(0.0, T, K + 1)
    inc = streams.brownian_increments(seed, 0, np.diff(times), e, tag="common", sub_resolution=R)
    return ito_lift(inc.reshape(K, R, e), times)


def _naive_xx(rp, i, j):
    # Chen reconstruction by explicit left-to-right accumulation
    acc = np.zeros((rp.e, rp.e))
    for k in range(i, j):
        acc = acc + rp.xx_step[k] + np.outer(rp.x[k] - rp.x[i], rp.x[k + 1] - rp.x[k])
    return acc


# -- constructors ---------------------------------------------------------------

def test_linear_path_unit_interval():
    rp = lift_smooth(lambda t: t, [0.0, 1.0], 1)
    assert rp.xx(0, 1)[0, 0] == 0.5


def test_constant_path_has_zero_increments():
    rp = lift_smooth(lambda t: np.full_like(t, 3.7), np.linspace(0, 1, 5), 8)
    assert np.all(rp.dx_step == 0.0)
    assert np.all(rp.xx_step == 0.0)


def test_t_t2_lift_matches_symbolic_iterated_integrals():
    # exact iterated integrals of (t, t^2) over [0, 1/2] and [1/2, 1]
    ref = np.array([[[1 / 8, 1 / 12], [1 / 24, 1 / 32]],
                    [[1 / 8, 5 / 24], [1 / 6, 9 / 32]]])
    rp = lift_smooth(lambda t: np.stack([t, t ** 2], axis=-1), [0.0, 0.5, 1.0], 4096)
    assert np.allclose(rp.xx_step, ref, atol=1e-8, rtol=0)
    # whole interval through Chen: int_0^1 r d(r^2) = 2/3 etc.
    assert np.allclose(rp.xx(0, 2), [[1 / 2, 2 / 3], [1 / 3, 1 / 2]], atol=1e-8)


def test_geometric_symmetric_part():
    times = np.linspace(0, 2, 17)
    rp = lift_smooth(lambda t: np.stack([np.sin(t), np.cos(3 * t), t ** 3], -1), times, 16)
    for i in range(rp.K):
        sym = 0.5 * (rp.xx_step[i] + rp.xx_step[i].T)
        assert np.allclose(sym, 0.5 * np.outer(rp.dx_step[i], rp.dx_step[i]), atol=1e-14)


def test_linear_sampler_lifted_exactly():
    v = np.array([1.5, -0.25])
    rp = lift_smooth(lambda t: np.outer(t, v), np.linspace(0, 1, 9), 3)
    for i in range(rp.K):
        assert np.allclose(rp.xx_step[i], 0.5 * np.outer(rp.dx_step[i], rp.dx_step[i]), atol=1e-15)


def test_lift_smooth_rejects_bad_input():
    with pytest.raises(ValueError):
        lift_smooth(lambda t: t, [0.0, 1.0, 0.5])
    with pytest.raises(ValueError):
        lift_smooth(lambda t: t, [0.0, 1.0], 0)


def test_scalar_ito_formula():
    rp = ito_lift(np.array([[[0.1], [0.25], [-0.05]]]), [0.0, 1.0])
    assert rp.dx(0, 1)[0] == pytest.approx(0.3, abs=1e-15)
    assert rp.xx_step[0, 0, 0] == pytest.approx(-0.455, abs=1e-15)
    rp0 = ito_lift(np.zeros((1, 4, 1)), [0.0, 1.0])
    assert rp0.xx_step[0, 0, 0] == -0.5


def test_scalar_ito_uses_exact_formula_not_riemann_sum():
    inc = np.array([[[0.3], [0.4]]])
    rp = ito_lift(inc, [0.0, 0.5])
    assert rp.xx_step[0, 0, 0] == pytest.approx((0.7 ** 2 - 0.5) / 2, abs=1e-15)


def test_multidim_ito_matches_brute_force_left_point_sum():
    K, R, e = 4, 64, 2
    times = np.linspace(0, 1, K + 1)
    inc = streams.brownian_increments(2024, 0, np.diff(times), e, tag="common", sub_resolution=R)
    rp = ito_lift(inc.reshape(K, R, e), times)
    for k in range(K):
        w = [0.0, 0.0]
        area = [[0.0, 0.0], [0.0, 0.0]]
        for r in range(R):
            for a in range(e):
                for b in range(e):
                    area[a][b] += w[a] * inc[k, r, b]
            for a in range(e):
                w[a] += inc[k, r, a]
        area = np.array(area)
        anti = 0.5 * (area - area.T)
        got = 0.5 * (rp.xx_step[k] - rp.xx_step[k].T)
        assert np.allclose(got, anti, atol=1e-14, rtol=0)
        assert np.allclose(rp.xx_step[k], area, atol=1e-14, rtol=0)


def test_ito_lift_shape_errors():
    with pytest.raises(ValueError):
        ito_lift(np.zeros((3, 2, 1)), [0.0, 1.0])


# -- Chen ---------------------------------------------------------------------------

def test_chen_reconstruction_matches_naive_sum():
    rp = _brownian_lift(3)
    for i, j in [(0, 32), (3, 17), (10, 11), (5, 5)]:
        assert np.allclose(rp.xx(i, j), _naive_xx(rp, i, j), atol=1e-13)


def test_row_agrees_with_pairwise_xx():
    rp = _brownian_lift(4, K=12)
    for i in range(rp.K):
        dx, xx = rp.row(i)
        for k in range(rp.K - i):
            assert np.allclose(xx[k], rp.xx(i, i + 1 + k), atol=1e-14)
            assert np.array_equal(dx[k], rp.dx(i, i + 1 + k))


def test_chen_defect_worked_example():
    rp = lift_smooth(lambda t: t, [0.0, 0.5, 1.0], 1)
    assert rp.xx(0, 2)[0, 0] == 0.5
    assert rp.xx(0, 1)[0, 0] == 0.125 and rp.xx(1, 2)[0, 0] == 0.125
    assert chen_defect(rp, 0, 1, 2) == 0.0


def test_chen_defect_detects_corrupted_table():
    rp = _brownian_lift(5, K=6, e=2)
    table = np.zeros((rp.K + 1, rp.K + 1, 2, 2))
    for i in range(rp.K + 1):
        for j in range(i + 1, rp.K + 1):
            table[i, j] = rp.xx(i, j)
    clean = GridRoughPath.from_two_parameter(rp.times, rp.x, table)
    assert max(chen_defect(clean, i, u, j) for i in range(7) for u in range(i, 7) for j in range(u, 7)) < 1e-13
    table[1, 4, 0, 1] += 1.0
    bad = GridRoughPath.from_two_parameter(rp.times, rp.x, table)
    assert chen_defect(bad, 1, 2, 4) >= 0.5
    assert chen_defect(bad, 0, 1, 4) >= 0.5


def test_chen_defect_index_checks():
    rp = _brownian_lift(1, K=4)
    with pytest.raises(IndexError):
        chen_defect(rp, 2, 1, 3)
    with pytest.raises(IndexError):
        chen_defect(rp, 0, 1, 5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), data=st.data())
def test_chen_holds_on_random_triples(seed, data):
    rp = _brownian_lift(seed, K=16, e=data.draw(st.integers(1, 3)))
    i = data.draw(st.integers(0, rp.K))
    u = data.draw(st.integers(i, rp.K))
    j = data.draw(st.integers(u, rp.K))
    assert chen_defect(rp, i, u, j) <= 1e-12


def test_coarsen_preserves_increments():
    rp = _brownian_lift(6, K=16)
    idx = np.array([0, 3, 8, 16])
    c = coarsen(rp, idx)
    for a in range(3):
        for b in range(a + 1, 4):
            assert np.allclose(c.xx(a, b), rp.xx(idx[a], idx[b]), atol=1e-14)


# -- Hölder norms and distance --------------------------------------------------------

def _brute_holder(rp, alpha):
    bx = bxx = 0.0
    for i in range(rp.K + 1):
        for j in range(i + 1, rp.K + 1):
            h = rp.times[j] - rp.times[i]
            bx = max(bx, np.linalg.norm(rp.dx(i, j)) / h ** alpha)
            bxx = max(bxx, np.linalg.norm(_naive_xx(rp, i, j)) / h ** (2 * alpha))
    return bx, bxx


def test_holder_linear_path():
    rp = lift_smooth(lambda t: -2.5 * t, np.linspace(0, 1, 11), 1)
    rep = holder_norms(rp, 0.4)
    assert rep.dx_alpha == pytest.approx(2.5, rel=1e-14)


def test_holder_xx_of_identity_path_half():
    rp = lift_smooth(lambda t: t, np.linspace(0, 1, 9), 1)
    assert holder_norms(rp, 0.5).xx_2alpha == pytest.approx(0.5, rel=1e-14)


def test_holder_zero_path():
    rp = lift_smooth(lambda t: 0 * t, np.linspace(0, 1, 5), 2)
    rep = holder_norms(rp, 0.4)
    assert (rep.dx_alpha, rep.xx_2alpha, rep.triple_norm) == (0.0, 0.0, 0.0)


def test_holder_matches_brute_force_and_triple_norm():
    rp = _brownian_lift(9, K=10)
    rep = holder_norms(rp, 0.45)
    bx, bxx = _brute_holder(rp, 0.45)
    assert rep.dx_alpha == pytest.approx(bx, rel=1e-12)
    assert rep.xx_2alpha == pytest.approx(bxx, rel=1e-12)
    assert rep.triple_norm == pytest.approx(rep.dx_alpha + np.sqrt(rep.xx_2alpha), rel=1e-15)


def test_holder_subgrid_monotone():
    rp = _brownian_lift(10, K=32)
    sub = coarsen(rp, np.arange(0, 33, 4))
    full, part = holder_norms(rp, 0.4), holder_norms(sub, 0.4)
    assert part.dx_alpha <= full.dx_alpha + 1e-15
    assert part.xx_2alpha <= full.xx_2alpha * (1 + 1e-12)


def test_alpha_range_handling():
    with pytest.raises(ValueError):
        check_alpha(0.0)
    with pytest.raises(ValueError):
        check_alpha(1.2)
    with pytest.warns(UserWarning):
        check_alpha(0.9)
    assert check_alpha(0.4) == 0.4


def test_rp_distance_reflexive_and_shift_invariant():
    rp = _brownian_lift(11)
    assert rp_distance(rp, rp, 0.4, 0.4) == 0.0
    shifted = GridRoughPath(rp.times, rp.x + 5.0, rp.xx_step)
    assert rp_distance(rp, shifted, 0.4, 0.4) <= 1e-12


def test_rp_distance_small_grid_brute_force():
    times = [0.0, 0.25, 1.0]
    a = GridRoughPath(times, [[0.0], [1.0], [0.5]], [[[0.2]], [[-0.1]]])
    b = GridRoughPath(times, [[0.0], [0.5], [1.5]], [[[0.0]], [[0.3]]])
    # hand enumeration of the three pairs with alpha = alpha' = 1/2
    dX = {(0, 1): 0.5, (1, 2): 1.5, (0, 2): 1.0}
    # XX(0,2) = XX01 + XX12 + dX01 dX12: a -> 0.2 - 0.1 - 0.5 = -0.4; b -> 0.3 + 0.5 = 0.8
    dXX = {(0, 1): 0.2, (1, 2): 0.4, (0, 2): 1.2}
    span = {(0, 1): 0.25, (1, 2): 0.75, (0, 2): 1.0}
    expect = max(dX[k] / span[k] ** 0.5 for k in span) + max(dXX[k] / span[k] for k in span)
    assert rp_distance(a, b, 0.5, 0.5) == pytest.approx(expect, rel=1e-14)


def test_rp_distance_grid_mismatch():
    with pytest.raises(ValueError):
        rp_distance(_brownian_lift(1, K=4), _brownian_lift(1, K=5), 0.4, 0.4)


@settings(max_examples=25, deadline=None)
@given(seeds=st.tuples(*[st.integers(0, 10 ** 6)] * 3))
def test_rp_distance_pseudometric(seeds):
    a, b, c = (_brownian_lift(s, K=12) for s in seeds)
    ab, ba = rp_distance(a, b, 0.4, 0.4), rp_distance(b, a, 0.4, 0.4)
    assert ab == ba
    assert ab <= rp_distance(a, c, 0.4, 0.4) + rp_distance(c, b, 0.4, 0.4) + 1e-12


# -- serialisation -------------------------------------------------------------------

def test_text_round_trip_bit_exact(tmp_path):
    rp = _brownian_lift(12, K=20, e=3)
    save_text(rp, tmp_path / "rp.txt")
    back = load_text(tmp_path / "rp.txt")
    assert np.array_equal(back.times, rp.times)
    assert np.array_equal(back.x, rp.x)
    assert np.array_equal(back.xx_step, rp.xx_step)
    assert back.alpha_hint == rp.alpha_hint
    header = (tmp_path / "rp.txt").read_text().splitlines()[0].split()
    assert header[:2] == ["3", "20"]


def test_load_text_rejects_truncated(tmp_path):
    rp = _brownian_lift(13, K=4)
    save_text(rp, tmp_path / "rp.txt")
    lines = (tmp_path / "rp.txt").read_text().splitlines()[:-1]
    (tmp_path / "bad.txt").write_text("\n".join(lines))
    with pytest.raises(ValueError):
        load_text(tmp_path / "bad.txt")
