import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ch2wave.errors import ConfigurationError, DomainError
from ch2wave.evolve import (GridState, RunConfig, check_bounds, evolve, max_stable_dt,
                            orbital_distance, perturb, rhs, sigma0_bounds, state_from_profile,
                            x_norm)
from ch2wave.fourier import Grid, ddx, helmholtz_inverse
from ch2wave.params import Params

ROOT_HALF_PI = math.sqrt(math.pi / 2)


def gaussian_state(L=30.0, n=256, ua=0.5, ea=0.1, x0=0.0):
    return GridState.from_functions(L, n, lambda x: ua * np.exp(-(x - x0) ** 2),
                                    lambda x: ea * np.exp(-(x - x0) ** 2))


def naive_rhs(state, p):
    """Pointwise products without dealiasing; accurate for well-resolved fields."""
    g, u, eta = state.grid, state.u, state.eta
    ux = ddx(u, g)
    src = -p.A * u + 0.5 * (3 - p.sigma) * u * u + 0.5 * p.sigma * ux * ux + 0.5 * (1 + eta) ** 2
    du = -p.sigma * u * ux - ddx(helmholtz_inverse(src, g), g)
    de = -ddx((1 + eta) * u, g)
    return du, de


@pytest.fixture(scope="module")
def wave(profile_factory):
    pr = profile_factory(0.5, 0.1, 1.5, None, 37.0, 1024)
    return pr, state_from_profile(pr)


def test_state_validation():
    with pytest.raises(DomainError):
        GridState(Grid.periodic_box(10.0, 96), np.zeros(96), np.zeros(96))
    with pytest.raises(DomainError):
        GridState(Grid(0.0, 0.1, 64, periodic=False), np.zeros(64), np.zeros(64))
    with pytest.raises(DomainError):
        GridState(Grid.periodic_box(10.0, 64), np.zeros(64), np.zeros(32))


def test_equilibrium():
    g = Grid.periodic_box(20.0, 128)
    zero = GridState(g, np.zeros(128), np.zeros(128))
    for s in (-1.0, 0.0, 2.0):
        du, de = rhs(zero, Params(s, 0.3, 0.0))
        assert np.max(np.abs(du)) < 1e-15 and np.max(np.abs(de)) == 0.0
    final, diag = evolve(zero, Params(1.0, 0.3, 0.0), 2.0, 0.01)
    assert np.max(np.abs(final.u)) < 1e-14 and not diag.blowup_flag


@pytest.mark.parametrize("s", [-1.0, 0.0, 0.5, 2.0])
def test_rhs_against_naive(s):
    st_ = gaussian_state(L=40.0, n=512, ua=0.8, ea=-0.3)
    p = Params(s, 0.4, 0.0)
    du, de = rhs(st_, p)
    ndu, nde = naive_rhs(st_, p)
    np.testing.assert_allclose(du, ndu, atol=1e-11)
    np.testing.assert_allclose(de, nde, atol=1e-11)


def test_travelling_wave_rhs(wave):
    pr, st_ = wave
    du, de = rhs(st_, pr.params)
    c = pr.params.c
    ref_u, ref_e = -c * ddx(st_.u, st_.grid), -c * ddx(st_.eta, st_.grid)
    assert np.max(np.abs(du - ref_u)) <= 1e-6 * np.max(np.abs(ref_u))
    assert np.max(np.abs(de - ref_e)) <= 1e-6 * np.max(np.abs(ref_e))


def test_time_reversal_symmetry():
    """(u, eta)(x, t) -> (u, eta)(-x, -t) maps solutions to solutions."""
    s0 = GridState.from_functions(30.0, 256, lambda x: 0.6 * np.exp(-(x - 1) ** 2) * (1 + 0.5 * x),
                                  lambda x: 0.2 * np.exp(-(x + 0.5) ** 2))
    p = Params(0.7, 0.4, 0.0)
    T, dt = 0.5, 0.005
    s1, _ = evolve(s0, p, T, dt)
    back, _ = evolve(s1.reflected(), p, T, dt)
    ref = s0.reflected()
    assert np.max(np.abs(back.u - ref.u)) < 1e-8
    assert np.max(np.abs(back.eta - ref.eta)) < 1e-8


def test_round_trip_and_reflection():
    st_ = gaussian_state()
    back = np.fft.irfft(np.fft.rfft(st_.u), n=st_.grid.n)
    assert np.max(np.abs(back - st_.u)) <= 1e-12 * np.max(np.abs(st_.u))
    r = st_.reflected()
    np.testing.assert_array_equal(r.reflected().u, st_.u)
    np.testing.assert_allclose(r.u[1:], st_.u[1:][::-1], rtol=0, atol=0)


def test_cfl_check():
    st_ = gaussian_state()
    p = Params(1.0, 0.1, 0.0)
    lim = max_stable_dt(st_, p)
    assert lim == pytest.approx(0.5 * st_.grid.h / (0.5 + 1.0))
    with pytest.raises(ConfigurationError):
        evolve(st_, p, 1.0, 1.01 * lim)
    with pytest.raises(ConfigurationError):
        evolve(st_, p, -1.0, lim)


def test_conservation_and_order(wave):
    pr, st_ = wave
    p = pr.params
    dt = max_stable_dt(st_, p, p.c)
    T = 5 / p.c
    d1 = evolve(st_, p, T, dt)[1]
    d2 = evolve(st_, p, T, dt / 2)[1]
    assert d1.drift("E") <= 1e-6 and d1.drift("F") <= 1e-6
    assert d1.drift("E") / d2.drift("E") >= 8
    assert len(d1.times) == len(d1.E_series) == len(d1.sup_ux) == len(d1.inf_ux)


def test_orbital_distance_exact_and_shifted(wave):
    pr, st_ = wave
    assert orbital_distance(st_, pr) <= 1e-10
    shifted = GridState(st_.grid, np.roll(st_.u, 17), np.roll(st_.eta, 17))
    assert orbital_distance(shifted, pr) <= 1e-10


def test_orbital_distance_subgrid_shift(wave):
    pr, st_ = wave
    g = st_.grid
    phase = np.exp(-1j * g.k * 0.37 * g.h)
    u = np.fft.irfft(np.fft.rfft(st_.u) * phase, n=g.n)
    e = np.fft.irfft(np.fft.rfft(st_.eta) * phase, n=g.n)
    assert orbital_distance(GridState(g, u, e), pr) <= 1e-7


def test_orbital_distance_perturbation(wave):
    pr, st_ = wave
    eps = 0.01
    bump_norm = eps * math.sqrt(2 * ROOT_HALF_PI)  # int b^2 + b_x^2 for b = eps exp(-x^2)
    d = orbital_distance(perturb(st_, eps), pr)
    assert d == pytest.approx(bump_norm, rel=0.1)
    assert d <= bump_norm * (1 + 1e-9)


def test_orbital_distance_grid_mismatch(wave, profile_factory):
    pr, st_ = wave
    with pytest.raises(DomainError):
        orbital_distance(gaussian_state(), pr)


def test_sigma0_bounds_trivial():
    g = Grid.periodic_box(20.0, 128)
    b = sigma0_bounds(GridState(g, np.zeros(128), np.zeros(128)), Params(0.0, 0.5, 0.0))
    assert b.C1 == 0.0 and b.C2 == pytest.approx(math.sqrt(2))
    assert b.upper(3.0) == pytest.approx(1.5) and b.lower(3.0) == pytest.approx(-1.5)
    with pytest.raises(DomainError):
        sigma0_bounds(GridState(g, np.zeros(128), np.zeros(128)), Params(0.1, 0.5, 0.0))


def test_sigma0_constants_gaussian():
    st_ = gaussian_state(40.0, 512)
    A = 0.1
    b = sigma0_bounds(st_, Params(0.0, A, 0.0))
    norm_sq = 0.25 * 2 * ROOT_HALF_PI + 0.01 * ROOT_HALF_PI
    assert b.C1 == pytest.approx(math.sqrt((3 + A * A) / 2 * norm_sq), rel=1e-12)
    assert b.C2 == pytest.approx(math.sqrt(2 + b.C1 ** 2), rel=1e-14)
    assert b.upper(0.0) == pytest.approx(float(st_.u_x().max()))
    assert b.lower(0.0) == pytest.approx(float(st_.u_x().min()))
    assert x_norm(st_.u, st_.eta, st_.grid) == pytest.approx(math.sqrt(norm_sq), rel=1e-12)


@settings(max_examples=6, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(-0.3, 0.3), st.floats(0.05, 2.0))
def test_sigma0_bounds_hold(ua, ea, A):
    st_ = gaussian_state(40.0, 256, ua, ea)
    p = Params(0.0, A, 0.0)
    _, diag = evolve(st_, p, 3.0, 0.5 * max_stable_dt(st_, p))
    assert check_bounds(diag, sigma0_bounds(st_, p), st_.grid.h ** 2)
    assert not diag.blowup_flag and not diag.bound_violation


def test_blowup_flag_threshold():
    st_ = GridState.from_functions(20.0, 256, lambda x: -3 * x * np.exp(-x * x),
                                   lambda x: -np.exp(-x * x))
    p = Params(2.0, 0.1, 0.0)
    final, diag = evolve(st_, p, 1.0, 0.5 * max_stable_dt(st_, p), blowup_threshold=5.0)
    assert diag.blowup_flag and diag.abort_reason == "slope threshold exceeded"
    assert diag.blowup_time < 1.0
    assert final.t == pytest.approx(diag.blowup_time)


def test_non_finite_abort_keeps_last_state():
    g = Grid.periodic_box(20.0, 64)
    u = np.exp(-g.x ** 2)
    u[5] = np.nan
    bad = GridState(g, u, np.zeros(64))
    with np.errstate(all="ignore"):
        final, diag = evolve(bad, Params(0.0, 0.1, 0.0), 0.1, 0.01)
    assert diag.blowup_flag and diag.steps == 0
    assert "non-finite" in diag.abort_reason


def test_deterministic_runs(wave):
    pr, st_ = wave
    p = pr.params
    a = evolve(perturb(st_, 0.01), p, 1.0, 0.02, profile=pr)
    b = evolve(perturb(st_, 0.01), p, 1.0, 0.02, profile=pr)
    np.testing.assert_array_equal(a[0].u, b[0].u)
    assert a[1].orbital_distance == b[1].orbital_distance


def test_perturb_only_u(wave):
    _, st_ = wave
    q = perturb(st_, 0.02, 1.0, 0.5)
    np.testing.assert_array_equal(q.eta, st_.eta)
    np.testing.assert_allclose(q.u - st_.u, 0.02 * np.exp(-((st_.grid.x - 1) / 0.5) ** 2),
                               atol=1e-15)


def test_run_config(tmp_path):
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"sigma": 0, "A": 0.1, "L": 20, "bogus": 1})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"sigma": 0, "A": 0.1, "L": 20, "N": 100})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"sigma": 0, "A": 0.1})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"A": 0.1, "L": 20})
    cfgs = [
        {"sigma": 0, "A": 0.1, "L": 20, "N": 128, "initial": {"type": "gaussian", "u_amp": 0.5}},
        {"sigma": 2, "A": 0.1, "L": 20, "N": 128, "initial": {"type": "odd-gaussian", "amplitude": 3}},
        {"sigma": 0.5, "A": 0.1, "N": 512,
         "initial": {"type": "solitary", "c": 1.5, "perturbation": {"amplitude": 0.01}}},
        {"sigma": 0, "A": 0.1, "L": 20, "N": 64},
    ]
    for data in cfgs:
        path = tmp_path / "run.json"
        path.write_text(json.dumps(data))
        cfg = RunConfig.from_json(path)
        state, p, profile, dt = cfg.build()
        assert dt <= max_stable_dt(state, p, abs(p.c))
        solitary = data.get("initial", {}).get("type") == "solitary"
        assert (profile is not None) == solitary


def test_diagnostics_files(tmp_path, wave):
    pr, st_ = wave
    _, diag = evolve(st_, pr.params, 0.5, 0.02, profile=pr)
    diag.to_csv(tmp_path / "d.csv")
    diag.to_json(tmp_path / "d.json", {"tag": 1})
    paths = diag.to_svg(tmp_path)
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header == "t,E,F,sup_ux,inf_ux,orbital_distance"
    assert json.loads((tmp_path / "d.json").read_text())["tag"] == 1
    assert len(paths) == 4 and all(p.read_text().startswith("<svg") for p in paths)
