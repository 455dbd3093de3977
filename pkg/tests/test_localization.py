import numpy as np
import pytest

from nfsr.arraymodel import PathParam
from nfsr.invrange import InverseRangeMap, atom_matrix
from nfsr.localization import (
    DualPolynomial,
    PathEstimate,
    RankDeficiencyError,
    estimate_gains,
    find_peaks,
    match_support,
    refine_atoms,
)
from nfsr.measurement import observe_lifted, vec


def test_eval_single_coefficient(cfg):
    # A single (k, m) coefficient evaluates to its atom factor.
    c = np.zeros((cfg.n_u, cfg.n_b), dtype=complex)
    c[3, 5] = 2.0
    dp = DualPolynomial(cfg, c)
    k = cfg.k_u_all[3]
    kt = cfg.k_theta(5 + 1)  # columns are m = 1..n_b
    u, th = 0.7, 1.3
    expected = 2.0 * np.exp(1j * k * u) * np.exp(1j * kt * th)
    assert dp.eval(u, th) == pytest.approx(expected, abs=1e-14)


def test_eval_linearity_and_grid_consistency(cfg):
    rng = np.random.default_rng(0)
    c1 = rng.standard_normal((cfg.n_u, cfg.n_b)) + 1j * rng.standard_normal(
        (cfg.n_u, cfg.n_b)
    )
    c2 = rng.standard_normal((cfg.n_u, cfg.n_b)) + 1j * rng.standard_normal(
        (cfg.n_u, cfg.n_b)
    )
    dp1, dp2 = DualPolynomial(cfg, c1), DualPolynomial(cfg, c2)
    dps = DualPolynomial(cfg, c1 + 2 * c2)
    u, th = 2.2, 0.4
    assert dps.eval(u, th) == pytest.approx(
        dp1.eval(u, th) + 2 * dp2.eval(u, th), abs=1e-12
    )
    ug, tg, qv = dp1.eval_grid(32, 16)
    assert qv.shape == (32, 16)
    assert qv[5, 7] == pytest.approx(dp1.eval(ug[5], tg[7]), abs=1e-12)


def test_eval_matches_atom_pairing(cfg):
    rng = np.random.default_rng(1)
    c = rng.standard_normal((cfg.n_u, cfg.n_b)) + 1j * rng.standard_normal(
        (cfg.n_u, cfg.n_b)
    )
    dp = DualPolynomial(cfg, c)
    u, th = 1.9, 2.1
    assert dp.eval(u, th) == pytest.approx(
        np.sum(c * atom_matrix(cfg, u, th)), abs=1e-12
    )


def test_from_dual_is_sensing_adjoint(ensemble, cfg):
    rng = np.random.default_rng(2)
    q = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    dp = DualPolynomial.from_dual(ensemble, q)
    expected = np.einsum("m,mkb->kb", np.conj(q), ensemble.psi)
    np.testing.assert_allclose(dp.coeffs, expected, atol=1e-13)


def _fejer_certificate(cfg, u0, th0):
    """Separable Fejer-kernel polynomial with a unique unit peak at (u0, th0)."""
    ku = cfg.k_u_all.astype(float)
    kt = cfg.k_theta_all.astype(float)
    tri_u = 1 - np.abs(ku) / (np.max(np.abs(ku)) + 1)
    tri_t = 1 - np.abs(kt) / (np.max(np.abs(kt)) + 1)
    wu = tri_u * np.exp(-1j * ku * u0)
    wt = tri_t * np.exp(-1j * kt * th0)
    c = np.outer(wu / tri_u.sum(), wt / tri_t.sum())
    return DualPolynomial(cfg, c)


def test_find_peaks_recovers_constructed_maximum(cfg):
    u0, th0 = 3.41, 0.87
    dp = _fejer_certificate(cfg, u0, th0)
    peaks = find_peaks(dp, threshold=0.9, grid=(512, 512))
    assert len(peaks) == 1
    u, th, val = peaks[0]
    assert u == pytest.approx(u0, abs=1e-6)
    assert th == pytest.approx(th0, abs=1e-6)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_find_peaks_grid_invariance(cfg):
    dp = _fejer_certificate(cfg, 1.2, 2.5)
    p1 = find_peaks(dp, threshold=0.9, grid=(512, 512))[0]
    p2 = find_peaks(dp, threshold=0.9, grid=(768, 640))[0]
    assert p1[0] == pytest.approx(p2[0], abs=1e-8)
    assert p1[1] == pytest.approx(p2[1], abs=1e-8)


def test_find_peaks_validation(cfg):
    dp = _fejer_certificate(cfg, 1.0, 1.0)
    with pytest.raises(ValueError):
        find_peaks(dp, threshold=1.5)
    with pytest.raises(ValueError):
        find_peaks(dp, grid=(8, 8))


def test_refine_atoms_exact_recovery(ensemble, reference_atoms):
    obs = observe_lifted(ensemble, reference_atoms)
    # Perturb the initial locations off the truth.
    init = [(u + 0.01, t - 0.01) for u, t, _ in reference_atoms]
    out = refine_atoms(ensemble, obs.y, init)
    assert len(out) == len(reference_atoms)
    out = sorted(out, key=lambda a: a[0])
    truth = sorted(reference_atoms, key=lambda a: a[0])
    for (u, t, c), (u0, t0, c0) in zip(out, truth):
        assert u == pytest.approx(u0, abs=1e-8)
        assert t == pytest.approx(t0, abs=1e-8)
        assert c == pytest.approx(c0, abs=1e-7)


def test_refine_atoms_empty(ensemble):
    assert refine_atoms(ensemble, np.zeros(20, dtype=complex), []) == []


def test_estimate_gains_exact(ensemble, reference_atoms):
    obs = observe_lifted(ensemble, reference_atoms)
    support = [(u, t) for u, t, _ in reference_atoms]
    gains = estimate_gains(ensemble, support, obs.y)
    np.testing.assert_allclose(
        gains, [c for _, _, c in reference_atoms], atol=1e-10
    )


def test_estimate_gains_rank_deficiency(ensemble, reference_atoms):
    u, t, _ = reference_atoms[0]
    with pytest.raises(RankDeficiencyError):
        estimate_gains(ensemble, [(u, t), (u, t)], np.zeros(20, dtype=complex))
    with pytest.raises(ValueError):
        estimate_gains(ensemble, [], np.zeros(20, dtype=complex))


def _est(cfg, r, theta, gain, cert=1.0):
    rmap = InverseRangeMap.from_config(cfg)
    return PathEstimate(
        u_hat=rmap.u_of_r(r), theta_hat=theta, r_hat=r, gain_hat=gain,
        certificate=cert,
    )


def test_match_support_perfect(cfg):
    truth = [
        PathParam(range=3.4172, angle=0.8749, gain=1.0 + 0.5j),
        PathParam(range=0.8560, angle=1.9866, gain=0.3 - 1.5j),
    ]
    # Estimates listed in the opposite order must still match optimally.
    est = [
        _est(cfg, 0.8560, 1.9866, 0.3 - 1.5j),
        _est(cfg, 3.4172, 0.8749, 1.0 + 0.5j),
    ]
    metrics = match_support(cfg, est, truth, model="fresnel")
    assert metrics.misses == 0 and metrics.false_alarms == 0
    assert sorted(metrics.assignments) == [(0, 1), (1, 0)]
    assert max(metrics.delta_theta) < 1e-12
    assert max(metrics.delta_u) < 1e-12
    assert max(metrics.delta_gain) < 1e-12
    assert metrics.channel_nmse < 1e-20


def test_match_support_counts(cfg):
    truth = [PathParam(range=2.0, angle=1.0, gain=1.0)]
    metrics = match_support(cfg, [], truth)
    assert metrics.misses == 1 and metrics.false_alarms == 0
    est = [_est(cfg, 2.0, 1.0, 1.0), _est(cfg, 4.0, 2.0, 1.0)]
    metrics = match_support(cfg, est, truth)
    assert metrics.misses == 0 and metrics.false_alarms == 1
