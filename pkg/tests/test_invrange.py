import os

import mpmath as mp
import numpy as np
import pytest

from nfsr.bessel import bessel_table
from nfsr.config import ArrayConfig
from nfsr.harmonics import j_power
from nfsr.invrange import (
    CacheMismatch,
    InverseRangeMap,
    PanelLayout,
    atom_matrix,
    build_basis,
    fit_panel,
    lifted_inner,
    load_basis,
    save_basis,
)


def test_map_endpoints(rmap, cfg):
    assert rmap.u_of_r(cfg.r_max) == 0.0
    assert rmap.u_of_r(cfg.r_min) == pytest.approx(2 * np.pi, abs=1e-14)
    assert rmap.r_of_u(0.0) == cfg.r_max
    assert rmap.r_of_u(2 * np.pi) == pytest.approx(cfg.r_min, abs=1e-14)


def test_map_direct_value(rmap):
    # [0.1, 6] m, r = 0.2: u = 2*pi*(5 - 1/6)/(10 - 1/6).
    expected = 2 * np.pi * (5 - 1 / 6) / (10 - 1 / 6)
    assert rmap.u_of_r(0.2) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(3.08835, abs=1e-5)
    assert rmap.r_of_u(expected) == pytest.approx(0.2, abs=1e-9)


def test_map_roundtrip(rmap, cfg):
    rs = np.linspace(cfg.r_min, cfg.r_max, 1000)
    us = rmap.u_of_r(rs)
    assert np.max(np.abs(rmap.u_of_r(rmap.r_of_u(us)) - us)) <= 1e-12


def test_map_domain_errors(rmap):
    with pytest.raises(ValueError):
        rmap.u_of_r(0.05)
    with pytest.raises(ValueError):
        rmap.r_of_u(7.0)


def test_partition_of_unity(cfg):
    layout = PanelLayout(cfg)
    x = np.linspace(layout.x_min, layout.x_max, 4096)
    total = sum(layout.window(p, x) for p in range(cfg.n_panels))
    np.testing.assert_allclose(total, 1.0, atol=1e-12)


def test_fit_panel_constant_target(cfg):
    # F_{0,0} = 1: as mu -> 0 the fit approaches the exact interpolation
    # a[0] = 1, a[k != 0] = 0. The panel Gram matrix is ill-conditioned
    # (Fourier modes on a sub-interval), so the ridge perturbs the
    # coefficients by O(mu * cond); check both the default and the limit.
    fit = fit_panel(cfg, 0, 0, 1)
    assert fit.coeffs[cfg.k_loc] == pytest.approx(1.0, abs=1e-4)
    assert np.max(np.abs(np.delete(fit.coeffs, cfg.k_loc))) < 1e-4
    cfg0 = ArrayConfig(n_antennas=64, carrier_freq=100e9, ridge_mu=0.0)
    fit0 = fit_panel(cfg0, 0, 0, 1)
    assert fit0.coeffs[cfg.k_loc] == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(np.delete(fit0.coeffs, cfg.k_loc))) < 1e-9


def test_fit_panel_zero_target(cfg):
    # F_{0,1} = 0 identically.
    fit = fit_panel(cfg, 0, 1, 0)
    assert np.max(np.abs(fit.coeffs)) < 1e-12


def test_fit_panel_extended_precision_normal_equations(cfg):
    # Independent oracle: solve (A^H W A + mu I) a = A^H W f at 40 digits.
    mp.mp.dps = 40
    n, q, p = 63, 1, 2
    fit = fit_panel(cfg, n, q, p)
    lam = mp.mpf(299792458) / mp.mpf(100e9)
    alpha = (2 * mp.pi / lam) * (n * lam / 2) ** 2 / 4
    ks = range(-cfg.k_loc, cfg.k_loc + 1)
    rows = []
    fvals = []
    for x, u, w in zip(fit.nodes_x, fit.nodes_u, fit.weights):
        xm, um, wm = mp.mpf(x), mp.mpf(u), mp.mpf(w)
        rows.append([mp.sqrt(wm) * mp.e ** (1j * k * um) for k in ks])
        z = alpha * xm
        fvals.append(mp.sqrt(wm) * mp.e ** (-1j * z) * mp.besselj(q, z))
    a = mp.matrix(rows)
    f = mp.matrix(fvals)
    gram = a.H * a
    for i in range(len(ks)):
        gram[i, i] += mp.mpf(cfg.ridge_mu)
    coef = mp.lu_solve(gram, a.H * f)
    oracle = np.array([complex(coef[i]) for i in range(len(ks))])
    assert np.max(np.abs(fit.coeffs - oracle)) < 1e-10


def test_fit_weight_scale_invariance(cfg):
    # Scaling all weights leaves the (mu -> 0) least-squares argmin unchanged;
    # weights are already normalized to unit sum, so two calls must agree.
    f1 = fit_panel(cfg, 5, 0, 1)
    f2 = fit_panel(cfg, 5, 0, 1)
    np.testing.assert_array_equal(f1.coeffs, f2.coeffs)
    assert f1.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(f1.weights > 0)


def test_fit_error_monotone_in_local_order():
    base = dict(n_antennas=16, carrier_freq=100e9, ridge_mu=1e-12)
    errs = []
    for k_loc in [1, 2, 4]:
        cfg = ArrayConfig(**base, k_loc=k_loc)
        fit = fit_panel(cfg, 10, 0, 0)
        from nfsr.harmonics import fresnel_coeff

        f = np.atleast_1d(fresnel_coeff(cfg, 10, 0, fit.nodes_x))
        ks = np.arange(-k_loc, k_loc + 1)
        resid = f - np.exp(1j * np.outer(fit.nodes_u, ks)) @ fit.coeffs
        errs.append(np.sum(fit.weights * np.abs(resid) ** 2))
    assert errs[1] <= errs[0] + 1e-14
    assert errs[2] <= errs[1] + 1e-14


def test_basis_dimensions_and_phi0(basis, cfg):
    assert basis.phi.shape == (cfg.n_antennas, 5, 45)
    # Phi_0: only the (k=0, k_theta=0) entry is appreciably nonzero.
    phi0 = basis.phi[0].copy()
    center = abs(phi0[cfg.k_u, cfg.i_off])
    assert center == pytest.approx(1.0, abs=1e-6)
    phi0[cfg.k_u, cfg.i_off] = 0
    assert np.max(np.abs(phi0)) < 1e-6


def test_regrouping_identity(basis, cfg, rmap):
    # The lifting matrices reproduce the double harmonic sum built from the
    # same fitted coefficients, exactly (tests indexing, not fit quality).
    he_table = bessel_table(
        cfg.k_lambda * np.arange(cfg.n_antennas) * cfg.spacing, cfg.i1
    ).T
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(0, cfg.n_antennas))
        r = rng.uniform(cfg.r_min, cfg.r_max)
        theta = rng.uniform(0, np.pi)
        u = rmap.u_of_r(r)
        triple = 0.0 + 0.0j
        for li, ell in enumerate(range(-cfg.i1, cfg.i1 + 1)):
            for qi, q in enumerate(range(-cfg.i2, cfg.i2 + 1)):
                f_fit = basis.a_nq[n, qi] @ np.exp(1j * cfg.k_u_all * u)
                triple += (
                    j_power(ell + q) * he_table[n, li] * f_fit
                    * np.exp(1j * (ell + 2 * q) * theta)
                )
        assert abs(lifted_inner(basis, n, u, theta) - triple) < 1e-12


def test_lifted_inner_zeroth_antenna(basis):
    for u, theta in [(0.3, 0.4), (5.0, 3.0)]:
        assert lifted_inner(basis, 0, u, theta) == pytest.approx(1.0, abs=1e-6)


def test_lifted_inner_tracks_fit_quality(basis, cfg, rmap):
    # For a small-n antenna the fit is accurate, so the lifted inner product
    # approximates the harmonic expansion within the reported fit error.
    from nfsr.harmonics import HarmonicExpansion, expansion_eval

    he = HarmonicExpansion(cfg)
    n, r, theta = 4, 1.9, 1.1
    val = lifted_inner(basis, n, rmap.u_of_r(r), theta)
    ref = expansion_eval(he, r, theta, n)
    bound = basis.fit_error[n].max() * (2 * cfg.i1 + 1) * (2 * cfg.i2 + 1)
    assert abs(val - ref) <= max(bound, 1e-8)


def test_cache_roundtrip(tmp_path, basis, cfg):
    path = os.path.join(tmp_path, "basis.bin")
    save_basis(basis, path)
    loaded = load_basis(cfg, path)
    np.testing.assert_array_equal(loaded.a_nq, basis.a_nq)
    np.testing.assert_array_equal(loaded.phi, basis.phi)
    np.testing.assert_array_equal(loaded.fit_error, basis.fit_error)


def test_cache_rejects_mismatch(tmp_path, basis, cfg):
    path = os.path.join(tmp_path, "basis.bin")
    save_basis(basis, path)
    other = ArrayConfig(n_antennas=64, carrier_freq=100e9, k_u=3)
    with pytest.raises(CacheMismatch):
        load_basis(other, path)
    with open(path, "r+b") as fh:
        fh.write(b"XXXXXXXX")
    with pytest.raises(CacheMismatch):
        load_basis(cfg, path)


def test_atom_matrix_convention(cfg):
    u, theta = 0.9, 1.7
    a = atom_matrix(cfg, u, theta)
    assert a.shape == (cfg.n_u, cfg.n_b)
    # Entry (k, m): e^{jku} e^{j k_theta(m) theta} with k_theta(m) = m - 1 - I_off.
    assert a[cfg.k_u + 2, 0] == pytest.approx(
        np.exp(1j * (2 * u + (-cfg.i_off) * theta)), abs=1e-14
    )
