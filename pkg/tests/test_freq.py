"""Frequency maps: Sobel magnitudes and the piecewise-smooth solver."""

import numpy as np
import pytest

from bandgauge.freq import (
    PwsConfig,
    edge_set,
    pws_energy,
    pws_lfm,
    sobel_hfm,
)

SQ2 = np.sqrt(2.0)


def dense_direct_solve(i_arr, edges, alpha):
    """Independent minimizer of the frozen-edge quadratic.

    Builds the full normal-equation matrix from the energy definition
    (stationarity of 1/2 (I-L)^2 + alpha * sum_active (L_q - L_p)^2) and
    solves it densely.
    """
    h, w = i_arr.shape
    n = h * w
    keep = ~edges
    idx = lambda y, x: y * w + x
    a = np.zeros((n, n))
    for y in range(h):
        for x in range(w):
            p = idx(y, x)
            a[p, p] += 1.0
            for dy, dx in ((0, 1), (1, 0)):
                qy, qx = y + dy, x + dx
                if qy < h and qx < w and keep[y, x] and keep[qy, qx]:
                    q = idx(qy, qx)
                    a[p, p] += 2.0 * alpha
                    a[q, q] += 2.0 * alpha
                    a[p, q] -= 2.0 * alpha
                    a[q, p] -= 2.0 * alpha
    return np.linalg.solve(a, i_arr.ravel()).reshape(h, w)


# --- Sobel HFM ----------------------------------------------------------------


def test_constant_patch_zero_hfm():
    hfm = sobel_hfm(np.full((9, 9), 0.4))
    assert np.abs(hfm.values).max() == 0.0


def test_horizontal_ramp_interior_response():
    n = 16
    s = 1.0 / n
    xs = np.arange(n) * s
    patch = np.tile(xs, (n, 1))
    hfm = sobel_hfm(patch)
    want = (4.0 + 2.0 * SQ2) * s
    interior = hfm.values[1:-1, 1:-1]
    assert np.abs(interior - want).max() < 1e-12
    # Vertical component is zero: magnitude equals |horizontal| everywhere
    # interior, and rows are all identical.
    assert np.abs(hfm.values - hfm.values[0]).max() < 1e-12


def test_rotation_symmetry(rng):
    patch = rng.random((12, 12))
    rotated = np.rot90(patch)
    a = sobel_hfm(rotated).values
    b = np.rot90(sobel_hfm(patch).values)
    assert np.abs(a - b).max() < 1e-12


def test_matches_naive_kernel_correlation(rng):
    from bandgauge.freq import SOBEL_X, SOBEL_Y

    patch = rng.random((9, 11))
    padded = np.pad(patch, 1, mode="edge")
    h, w = patch.shape
    want = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            win = padded[y : y + 3, x : x + 3]
            gx = (win * SOBEL_X).sum()
            gy = (win * SOBEL_Y).sum()
            want[y, x] = np.sqrt(gx * gx + gy * gy)
    assert np.abs(sobel_hfm(patch).values - want).max() < 1e-12


def test_constant_offset_invariance(rng):
    patch = rng.random((10, 10)) * 0.5
    a = sobel_hfm(patch).values
    b = sobel_hfm(patch + 0.25).values
    assert np.abs(a - b).max() < 1e-12


def test_small_patch_rejected():
    with pytest.raises(ValueError):
        sobel_hfm(np.zeros((2, 5)))


# --- energy --------------------------------------------------------------------


def test_energy_zero_for_exact_constant_fit():
    i_arr = np.full((6, 6), 0.3)
    e = np.zeros((6, 6), dtype=bool)
    assert pws_energy(i_arr, i_arr, e, PwsConfig()) == 0.0


def test_energy_linear_in_alpha(rng):
    i_arr = rng.random((8, 8))
    l_arr = rng.random((8, 8))
    edges = edge_set(i_arr)
    cfgs = [PwsConfig(reg_alpha=a, reg_beta=0.05) for a in (1.0, 2.0, 4.0)]
    e1, e2, e4 = (pws_energy(i_arr, l_arr, edges, c) for c in cfgs)
    assert e4 - e2 == pytest.approx(2.0 * (e2 - e1), rel=1e-12)


def test_energy_dimension_mismatch():
    with pytest.raises(ValueError):
        pws_energy(np.zeros((4, 4)), np.zeros((4, 5)), np.zeros((4, 4), bool), PwsConfig())


def test_solver_output_beats_identity(rng):
    for _ in range(5):
        i_arr = rng.random((16, 16))
        cfg = PwsConfig(max_iters=400, tol=1e-10)
        lfm = pws_lfm(i_arr, cfg)
        edges = edge_set(i_arr)
        assert pws_energy(i_arr, lfm.values, edges, cfg) <= pws_energy(
            i_arr, i_arr, edges, cfg
        )


# --- solver behaviour ------------------------------------------------------------


def test_constant_image_is_fixed_point():
    arr = np.full((10, 10), 0.6)
    lfm = pws_lfm(arr, PwsConfig())
    assert np.abs(lfm.values - arr).max() == 0.0
    assert lfm.energy_trace[0] == 0.0


def test_alpha_to_zero_returns_input(rng):
    arr = rng.random((12, 12))
    lfm = pws_lfm(arr, PwsConfig(reg_alpha=1e-9, max_iters=200, tol=1e-14))
    assert np.abs(lfm.values - arr).max() < 1e-6


def test_monotone_energy_descent(rng):
    for _ in range(4):
        arr = rng.random((14, 14))
        lfm = pws_lfm(arr, PwsConfig(max_iters=60, tol=1e-14))
        trace = np.array(lfm.energy_trace)
        assert (np.diff(trace) <= 1e-12).all()


def test_noise_free_step_is_preserved_exactly():
    arr = np.full((16, 16), 0.2)
    arr[:, 8:] = 0.7
    cfg = PwsConfig(edge_threshold=0.3, max_iters=2000, tol=1e-14)
    lfm = pws_lfm(arr, cfg)
    assert np.abs(lfm.values - arr).max() < 1e-9


def test_noisy_step_smoothing():
    rng = np.random.default_rng(424242)
    clean = np.full((16, 16), 0.2)
    clean[:, 8:] = 0.7
    noise = rng.normal(0.0, 0.05, size=(16, 16))
    noise[:, 7:9] = 0.0  # keep the edge clean so tau separates it
    noisy = np.clip(clean + noise, 0.0, 1.0)
    cfg = PwsConfig(reg_alpha=2.0, edge_threshold=0.3, max_iters=4000, tol=1e-14)
    lfm = pws_lfm(noisy, cfg)

    # The edge pixels sit in the frozen set, so the solver reproduces them
    # exactly; the step height across the edge survives up to the plateau
    # noise's sample mean (the exact-preservation case is tested noise-free).
    assert np.abs(lfm.values[:, 7] - noisy[:, 7]).max() < 1e-9
    step = lfm.values[:, 8].mean() - lfm.values[:, 7].mean()
    true_step = clean[:, 8].mean() - clean[:, 7].mean()
    assert abs(step - true_step) < 0.02

    off_edge = np.ones((16, 16), dtype=bool)
    off_edge[:, 6:10] = False
    rms_in = np.sqrt(np.mean((noisy - clean)[off_edge] ** 2))
    rms_out = np.sqrt(np.mean((lfm.values - clean)[off_edge] ** 2))
    assert rms_out <= rms_in / 4.0

    # And the solver agrees with the dense direct solve of the same system.
    direct = dense_direct_solve(noisy, edge_set(noisy, 0.3), cfg.reg_alpha)
    rel = np.linalg.norm(lfm.values - direct) / np.linalg.norm(direct)
    assert rel < 1e-6


def test_direct_solve_agreement_random(rng):
    for _ in range(5):
        h = int(rng.integers(6, 20))
        w = int(rng.integers(6, 20))
        arr = rng.random((h, w))
        alpha = float(rng.uniform(0.5, 4.0))
        cfg = PwsConfig(reg_alpha=alpha, max_iters=20000, tol=1e-14)
        lfm = pws_lfm(arr, cfg)
        direct = dense_direct_solve(arr, edge_set(arr), alpha)
        rel = np.linalg.norm(lfm.values - direct) / np.linalg.norm(direct)
        assert rel < 1e-6


def test_nonfinite_input_rejected():
    arr = np.zeros((8, 8))
    arr[3, 3] = np.nan
    with pytest.raises(ValueError):
        pws_lfm(arr, PwsConfig())


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        PwsConfig(reg_alpha=0.0)
    with pytest.raises(ValueError):
        PwsConfig(tol=-1.0)
