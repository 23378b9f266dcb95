import math

import numpy as np
import pytest
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from bgflight import scattering as sc
from bgflight.errors import InvalidInputError, TailBoundError

POT = sc.GaussianPotential()
EY = np.array([1.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# Fourier transform
# ---------------------------------------------------------------------------

def test_w_hat_unit_gaussian_self_dual():
    assert POT.w_hat(np.zeros(3)) == pytest.approx(1.0)
    assert POT.w_hat(EY) == pytest.approx(math.exp(-math.pi))


def test_w_hat_real_positive_radially_decreasing():
    radii = np.linspace(0, 3, 40)
    vals = [float(POT.w_hat(r * EY)) for r in radii]
    assert all(v > 0 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # radial: same value on any direction
    v1 = POT.w_hat(np.array([0.3, 0.4, 0.0]))
    v2 = POT.w_hat(np.array([0.0, 0.0, 0.5]))
    assert v1 == pytest.approx(v2, rel=1e-14)


def test_w_hat_matches_hermite_quadrature():
    # tensor Gauss-Hermite of int W(x) exp(-2 pi i x.y) dx per axis
    pot = sc.GaussianPotential(amplitude=0.7, width=1.3)
    y = np.array([0.4, -0.2, 0.8])
    x, w = hermgauss(80)
    b = math.pi / pot.width ** 2
    val = 1.0 + 0.0j
    for yi in y:
        # substitute x = t/sqrt(b) so the Gaussian weight becomes e^{-t^2}
        t = x / math.sqrt(b)
        val *= np.sum(w * np.exp(-2j * math.pi * t * yi)) / math.sqrt(b)
    val *= pot.amplitude
    assert abs(complex(val) - pot.w_hat(y)) < 1e-8


def test_free_resolvent_conjugation():
    y, yp = EY, np.array([0.2, 0.5, -0.4])
    g = sc.free_resolvent(y, yp, 0.3)
    gm = sc.free_resolvent(y, yp, -0.3)
    assert np.conj(g) == pytest.approx(gm)


# ---------------------------------------------------------------------------
# Born terms
# ---------------------------------------------------------------------------

def test_first_born_is_w_hat():
    m = sc.ScatteringModel(POT, coupling=0.3, born_order=1)
    assert m.t_matrix(EY, EY) == pytest.approx(0.3)
    yp = np.array([0.0, 1.0, 0.0])
    assert m.t_matrix(EY, yp) == pytest.approx(0.3 * POT.w_hat(EY - yp))


def test_first_born_symmetry():
    y, yp = EY, np.array([0.1, -0.7, 0.3])
    m = sc.ScatteringModel(POT, coupling=0.2, born_order=1)
    assert m.t_matrix(y, yp) == pytest.approx(m.t_matrix(yp, y))


def test_t2_against_direct_3d_quadrature_off_shell():
    y0 = np.array([0.8, 0.1, 0.0])
    y2 = np.array([0.3, -0.5, 0.2])
    gam = 1.0
    ours = sc.born_term_2(POT, y0, y2, gamma=gam)
    n1, L = 48, 5.0
    x, w = leggauss(n1)
    pts = L * x
    X, Y, Z = np.meshgrid(pts, pts, pts, indexing="ij")
    P = np.stack([X, Y, Z], axis=-1)
    g = 1.0 / (0.5 * (y0 @ y0) - 0.5 * np.sum(P * P, axis=-1) + 1j * gam)
    vals = POT.w_hat(y0 - P) * POT.w_hat(P - y2) * g
    W3 = np.einsum("i,j,k->ijk", w, w, w) * L ** 3
    brute = complex(np.sum(W3 * vals))
    assert abs(ours - brute) < 2e-6


def test_t2_on_shell_imaginary_part():
    # spherical identity at order lambda^2: Im T2(y, y) equals
    # -pi ||y||^{d-2} int_{S^2} |W_hat(y - ||y|| w)|^2 dw (closed in d = 3)
    t2 = sc.born_term_2(POT, EY, EY, gamma=0.0)
    expected = -math.pi * (1 - math.exp(-8 * math.pi)) / 2
    assert t2.imag == pytest.approx(expected, rel=1e-10)


def test_t2_on_shell_symmetry():
    y = EY
    yp = np.array([0.0, 0.6, 0.8])
    a = sc.born_term_2(POT, y, yp, gamma=0.0)
    b = sc.born_term_2(POT, yp, y, gamma=0.0)
    assert a == pytest.approx(b, rel=1e-9)


def test_t2_gamma_continuity():
    y = EY
    yp = np.array([0.2, 0.9, 0.1])
    a = sc.born_term_2(POT, y, yp, gamma=1e-3)
    b = sc.born_term_2(POT, y, yp, gamma=1e-4)
    c = sc.born_term_2(POT, y, yp, gamma=0.0)
    assert abs(a - b) < 5e-3
    assert abs(b - c) < 5e-4
    assert abs(a - c) > abs(b - c)  # O(gamma) shrinkage


def test_t3_unitarity_cross_term():
    # order lambda^3 unitarity: Im T3(y,y) equals the spherical integral of
    # 2 Re(T1 conj T2), an independent combination of lower Born routes
    t3 = sc.born_term_3(POT, EY, EY, gamma=0.0)
    cn, cw = leggauss(48)
    acc = 0.0
    for c, w in zip(cn, cw):
        wv = np.array([c, math.sqrt(1 - c * c), 0.0])
        t1v = float(POT.w_hat(EY - wv))
        t2v = sc.born_term_2(POT, EY, wv, gamma=0.0)
        acc += w * 2.0 * (t1v * np.conj(t2v)).real
    expected = -math.pi * acc * 2 * math.pi
    assert t3.imag == pytest.approx(expected, rel=1e-9)


def test_born_order_cap():
    m = sc.ScatteringModel(POT, coupling=0.1, born_order=2)
    with pytest.raises(InvalidInputError):
        m.born_term(4, EY, EY)
    with pytest.raises(InvalidInputError):
        sc.ScatteringModel(POT, coupling=0.1, born_order=5)


def test_on_shell_zero_momentum_rejected():
    with pytest.raises(TailBoundError):
        sc.born_term_2(POT, np.zeros(3), EY, gamma=0.0)


# ---------------------------------------------------------------------------
# collision kernel and total cross section
# ---------------------------------------------------------------------------

def test_sigma_kernel_forward_first_born():
    m = sc.ScatteringModel(POT, coupling=0.1, born_order=1)
    val = m.sigma_kernel(EY, EY)
    assert val == pytest.approx(4 * math.pi ** 2 * 0.01, rel=1e-12)


def test_sigma_kernel_azimuthal_isotropy():
    m = sc.ScatteringModel(POT, coupling=0.1, born_order=1)
    c = 0.3
    s = math.sqrt(1 - c * c)
    d1 = np.array([c, s, 0.0])
    d2 = np.array([c, 0.0, s])
    d3 = np.array([c, s / math.sqrt(2), s / math.sqrt(2)])
    vals = [m.sigma_kernel(EY, d) for d in (d1, d2, d3)]
    assert max(vals) - min(vals) < 1e-12
    assert all(v >= 0 for v in vals)


def test_sigma_tot_matches_kernel_sphere_integral():
    m = sc.ScatteringModel(POT, coupling=0.1, born_order=1, sphere_nodes=96)
    cn, cw = leggauss(200)
    acc = 0.0
    for c, w in zip(cn, cw):
        acc += w * m.sigma_kernel(EY, np.array([c, math.sqrt(1 - c * c), 0]))
    acc *= 2 * math.pi
    assert m.sigma_tot(EY) == pytest.approx(acc, rel=1e-10)


def test_sigma_tot_first_born_closed_form():
    m = sc.ScatteringModel(POT, coupling=0.05, born_order=1)
    closed = sc.sigma_tot_born1_speeds(POT, 0.05, np.array([1.0]))[0]
    assert m.sigma_tot(EY) == pytest.approx(closed, rel=1e-12)
    assert closed == pytest.approx(
        2 * math.pi ** 2 * 0.05 ** 2 * (1 - math.exp(-8 * math.pi)),
        rel=1e-12)


def test_sigma_tot_small_coupling_scaling():
    vals = []
    for lam in (1e-2, 1e-3, 1e-4):
        m = sc.ScatteringModel(POT, coupling=lam, born_order=1)
        vals.append(m.sigma_tot(EY) / lam ** 2)
    assert vals[0] == pytest.approx(vals[1], rel=1e-12)
    assert vals[1] == pytest.approx(vals[2], rel=1e-12)


def test_sigma_tot_monotone_beyond_the_knee():
    # dense-grid scan: the first-Born cross section rises up to speed
    # ~0.22 for the unit Gaussian and decreases beyond it
    speeds = np.linspace(0.3, 3.0, 60)
    vals = sc.sigma_tot_born1_speeds(POT, 0.1, speeds)
    assert np.all(np.diff(vals) < 0)
    small = sc.sigma_tot_born1_speeds(POT, 0.1, np.array([0.05, 0.1, 0.2]))
    assert small[0] < small[1] < small[2]


def test_sigma_cache_consistency():
    m = sc.ScatteringModel(POT, coupling=0.1, born_order=1)
    a = m.sigma_tot(EY)
    b = m.sigma_tot(np.array([0.0, 1.0, 0.0]))  # same speed, other direction
    assert a == b


def test_zero_momentum_errors():
    m = sc.ScatteringModel(POT, coupling=0.1, born_order=1)
    with pytest.raises(InvalidInputError):
        m.sigma_kernel(np.zeros(3), EY)
    with pytest.raises(InvalidInputError):
        m.sigma_tot(np.zeros(3))


# ---------------------------------------------------------------------------
# optical theorem
# ---------------------------------------------------------------------------

def test_optical_residual_zero_coupling_limit():
    m = sc.ScatteringModel(POT, coupling=0.0, born_order=2)
    assert m.optical_residual(EY) == pytest.approx(0.0, abs=1e-15)


def test_optical_residual_order_lambda2():
    lam = 0.05
    m = sc.ScatteringModel(POT, coupling=lam, born_order=2)
    res = m.optical_residual(EY)
    assert abs(res) / lam ** 2 <= 1e-3


def test_optical_residual_requires_second_order():
    m = sc.ScatteringModel(POT, coupling=0.1, born_order=1)
    with pytest.raises(InvalidInputError):
        m.optical_residual(EY)


def test_optical_residual_third_order_scaling():
    # with the lambda^3 term on the T side only, the residual is cubic
    ratios = []
    for lam in (0.2, 0.1, 0.05):
        m = sc.ScatteringModel(POT, coupling=lam, born_order=3)
        ratios.append(m.optical_residual(EY, include_third_order=True)
                      / lam ** 3)
    assert ratios[0] == pytest.approx(ratios[1], rel=1e-8)
    assert ratios[1] == pytest.approx(ratios[2], rel=1e-8)
    assert abs(ratios[0]) > 0.1


# ---------------------------------------------------------------------------
# Schwartz norms and radius
# ---------------------------------------------------------------------------

def test_schwartz_norm_plain_l1():
    assert sc.schwartz_norm(POT, 0, 0) == pytest.approx(1.0, rel=1e-12)
    pot2 = sc.GaussianPotential(amplitude=2.0, width=0.5)
    assert sc.schwartz_norm(pot2, 0, 0) == pytest.approx(2.0 * 0.5 ** 3,
                                                         rel=1e-12)


def test_schwartz_norm_monotone_in_orders():
    prev = 0.0
    for m in range(0, 5):
        val = sc.schwartz_norm(POT, m, m)
        assert val >= prev - 1e-14
        prev = val
    assert sc.schwartz_norm(POT, 2, 3) >= sc.schwartz_norm(POT, 2, 1) - 1e-14


def test_schwartz_norm_cell_against_quadrature():
    # single-axis cell (alpha, beta) = (2, 1): integrate |x D^2 g| numerically
    s = 1.0
    xs = np.linspace(-8, 8, 400001)
    g = np.exp(-math.pi * xs ** 2 / s ** 2)
    d2 = (4 * math.pi ** 2 * xs ** 2 / s ** 4 - 2 * math.pi / s ** 2) * g
    integrand = np.abs(xs * d2) / (2 * math.pi) ** 2
    brute = np.trapezoid(integrand, xs)
    polys = sc._axis_poly_derivatives(s, 2)
    ours = sc._abs_poly_gauss_integral(
        np.concatenate([[0.0], polys[2] * (2 * math.pi) ** (-2)]), s)
    assert ours == pytest.approx(brute, rel=1e-7)


def test_schwartz_norm_rejects_other_exponents():
    with pytest.raises(InvalidInputError):
        sc.schwartz_norm(POT, 1, 1, p_exponent=2)


def test_radius_estimate():
    r = sc.radius_estimate(1.0, 1.0, d=4)
    # theta integral in d = 4 is exactly pi
    assert r.value == pytest.approx(1.0 / (2 * math.pi * math.sqrt(2.0)
                                           * math.pi), rel=1e-12)
    assert r.modulo_constant
    r3 = sc.radius_estimate(2.0, 3.0, d=3)
    assert 0 < r3.value < 1
