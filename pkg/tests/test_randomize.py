import io
import json

import numpy as np
import pytest

from roughmkv.coeffs import CoefficientSet, EmpiricalMeasure, eval_field, make_kernel, zero_kernel
from roughmkv.mkv import initial_atoms, simulate_mkv
from roughmkv.randomize import (RandomizationRun, TEST_FUNCTIONS, aggregate_tape, classical_common_noise_solver,
                                common_tape, conditional_law_compare, run_randomization, sample_common_lift,
                                sample_particle_tapes, write_randomize_jsonl)
from roughmkv.roughpath import ito_lift


def interacting_cs(d=1, e=1):
    return CoefficientSet(make_kernel("smooth_attract", d, (d,), scale=0.5),
                          make_kernel("constant", d, (d, 1), scale=0.3),
                          make_kernel("product_sin", d, (d, e), scale=0.5))


def multi_cs():
    L = np.zeros((2, 2, 2))
    L[:, 0, :] = np.eye(2)
    L[:, 1, :] = [[0.0, -1.0], [1.0, 0.0]]
    return CoefficientSet(make_kernel("smooth_attract", 2, (2,), scale=0.5),
                          make_kernel("constant", 2, (2, 1), scale=0.2),
                          make_kernel("product_sin", 2, (2, 2), loading=L, offset=0.5 * np.eye(2)))


def test_scalar_common_lift_exact_area():
    times = np.linspace(0, 1, 9)
    rp = sample_common_lift(times, 1, seed=4, sub_resolution=16)
    dW = rp.dx_step[:, 0]
    assert np.array_equal(rp.xx_step[:, 0, 0], (dW * dW - np.diff(times)) / 2)
    tape = common_tape(times, 1, 4, 0, 16)
    assert np.allclose(rp.x[1:, 0], np.cumsum(tape.sum(axis=1)[:, 0]), atol=1e-15)


def test_degenerate_zero_increment():
    rp = ito_lift(np.zeros((1, 1, 1)), [0.0, 1e-3])
    assert rp.xx_step[0, 0, 0] == -0.5e-3


def test_multid_area_matches_brute_force():
    times = np.linspace(0, 1, 3)
    R = 32
    tape = common_tape(times, 2, seed=9, sample=1, sub_resolution=R)
    rp = sample_common_lift(times, 2, seed=9, sub_resolution=R, sample=1)
    for k in range(2):
        area = np.zeros((2, 2))
        w = np.zeros(2)
        for r in range(R):
            for a in range(2):
                for b in range(2):
                    area[a, b] += w[a] * tape[k, r, b]
            w = w + tape[k, r]
        assert np.allclose(rp.xx_step[k] - rp.xx_step[k].T, area - area.T, atol=1e-14, rtol=0)


def test_tapes_are_nested_under_aggregation():
    times = np.linspace(0, 1, 5)
    fine = common_tape(times, 2, 3, 0, 64)
    assert aggregate_tape(fine, 16).shape == (4, 16, 2)
    assert np.allclose(aggregate_tape(fine, 1)[:, 0], fine.sum(axis=1), atol=1e-15)
    with pytest.raises(ValueError):
        aggregate_tape(fine, 48)


def test_classical_without_common_noise_is_euler_maruyama():
    cs = CoefficientSet(make_kernel("smooth_attract", 1, (1,), scale=0.5), make_kernel("constant", 1, (1, 1)),
                        zero_kernel(1, (1, 1)))
    times = np.linspace(0, 1, 17)
    xi = initial_atoms(0, 8, 1)
    dB = sample_particle_tapes(0, 0, 8, times, 1)
    Y = classical_common_noise_solver(cs, times, xi, dB, common_tape(times, 1, 0, 0, 1))
    ref = xi.copy()
    for i in range(16):
        b = eval_field(cs.b, ref, EmpiricalMeasure(ref))
        ref = ref + b * (times[i + 1] - times[i]) + dB[:, i]
        assert np.allclose(Y[i + 1], ref, atol=1e-14)


def test_zero_coefficients_constant():
    cs = CoefficientSet(zero_kernel(1, (1,)), zero_kernel(1, (1, 1)), zero_kernel(1, (1, 1)))
    times = np.linspace(0, 1, 9)
    xi = initial_atoms(1, 4, 1)
    run = run_randomization(cs, times, xi, seed=1, S=2, sub_resolution=4)
    for s in range(2):
        assert np.all(run.classical[s] == xi) and np.all(run.rough[s].Y == xi)


def test_scalar_pipelines_bitwise_equal():
    cs = interacting_cs()
    times = np.linspace(0, 1, 17)
    xi = initial_atoms(2, 16, 1)
    run = run_randomization(cs, times, xi, seed=2, S=6, sub_resolution=8)
    for s in range(6):
        assert np.array_equal(run.rough[s].Y, run.classical[s])
    for phi in TEST_FUNCTIONS:
        rows, summary = conditional_law_compare(run, phi)
        assert all(r["delta"] == 0.0 for r in rows) and summary["max"] == 0.0


def test_rough_pipeline_reads_the_lift_of_the_same_tape():
    cs = interacting_cs()
    times = np.linspace(0, 1, 9)
    xi = initial_atoms(3, 4, 1)
    run = run_randomization(cs, times, xi, seed=3, S=2, sub_resolution=4)
    for s in range(2):
        rp = sample_common_lift(times, 1, 3, 4, sample=s)
        assert np.array_equal(run.rough_paths[s].xx_step, rp.xx_step)
        dB = sample_particle_tapes(3, s, 4, times, 1)
        assert np.array_equal(simulate_mkv(cs, rp, xi, dB).Y, run.rough[s].Y)


def test_multid_gap_reported_and_one_is_exact():
    cs = multi_cs()
    times = np.linspace(0, 1, 9)
    xi = initial_atoms(5, 8, 2)
    run = run_randomization(cs, times, xi, seed=5, S=4, sub_resolution=4, classical_resolution=64)
    _, summary = conditional_law_compare(run, "tanh")
    assert summary["max"] > 0
    _, one = conditional_law_compare(run, "one")
    assert one["max"] == 0.0


def test_workers_do_not_change_results():
    cs = interacting_cs()
    times = np.linspace(0, 1, 9)
    xi = initial_atoms(6, 8, 1)
    a = run_randomization(cs, times, xi, seed=6, S=5, sub_resolution=4, workers=1)
    b = run_randomization(cs, times, xi, seed=6, S=5, sub_resolution=4, workers=3)
    for s in range(5):
        assert np.array_equal(a.rough[s].Y, b.rough[s].Y)
        assert np.array_equal(a.classical[s], b.classical[s])


def test_conditional_mean_depends_on_w_only_up_to_monte_carlo_band():
    cs = interacting_cs()
    times = np.linspace(0, 1, 17)
    N = 64
    xi = initial_atoms(7, N, 1)
    rp = sample_common_lift(times, 1, seed=7, sub_resolution=8)
    phi = TEST_FUNCTIONS["tanh"]
    base = phi(simulate_mkv(cs, rp, xi, sample_particle_tapes(7, 0, N, times, 1)).Y[-1])
    inside = 0
    for s in range(1, 21):
        other = phi(simulate_mkv(cs, rp, xi, sample_particle_tapes(7, s, N, times, 1)).Y[-1])
        inside += abs(base.mean() - other.mean()) <= 3 * base.std() / np.sqrt(N)
    assert inside >= 16


def test_compare_requires_all_outputs():
    run = RandomizationRun(0, 2, np.linspace(0, 1, 3))
    with pytest.raises(ValueError):
        conditional_law_compare(run, "tanh")


def test_jsonl_records():
    cs = interacting_cs()
    times = np.linspace(0, 1, 5)
    run = run_randomization(cs, times, initial_atoms(8, 4, 1), seed=8, S=3, sub_resolution=2)
    rows, _ = conditional_law_compare(run, "bump")
    buf = io.StringIO()
    write_randomize_jsonl(rows, times[-1], "bump", buf)
    recs = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert [r["sample"] for r in recs] == [0, 1, 2]
    assert set(recs[0]) == {"sample", "t", "phi_id", "rough_mean", "classical_mean", "delta"}
    assert recs[0]["t"] == 1.0 and recs[0]["phi_id"] == "bump"
