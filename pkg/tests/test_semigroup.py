import dataclasses
import warnings

import numpy as np
import pytest
import scipy.linalg

from boltzspec import collision, discretization as dz, potential as pt, quasimode as qm
from boltzspec import semigroup as sg, spectrum as spc
from boltzspec.errors import InsufficientWindow, NoPlateauDetected, SolverFailure

from .conftest import eigs, operator, predictions, tilted, triple

BGK = collision.CollisionModel.bgk()


def _quasimode_vector(name, h, opr):
    L = {"tilted": tilted, "triple": triple}[name]()[2]
    u = np.zeros(opr.size)
    for m in L.non_global():
        v = qm.to_discrete(qm.build_quasimode(L, m, h, BGK), opr)
        u += v / opr.norm(v)
    return u


def _run(name, h, ks, fraction=0.1, per_block=8, horizon=12.0):
    opr, sr = operator(name, h), eigs(name, h)
    slow = float(sr.small_eigs[1].real)
    pol = sg.default_policy(h, slow, fraction)
    pol.per_block = per_block
    return sg.evolve(opr, _quasimode_vector(name, h, opr), horizon * h / slow, sr, ks, pol), slow, sr


def test_policy_ladder():
    pol = sg.TimestepPolicy(max_dt=1.0)
    dts = pol.steps(0.1, 50.0)
    assert dts.sum() == pytest.approx(50.0)
    assert dts[0] == 0.1 and dts.max() == 1.0
    assert pol.per_decade(0.1, 50.0) >= 20
    with pytest.raises(ValueError):
        sg.evolve(operator("tilted", 0.2), operator("tilted", 0.2).kernel_vector(), 100.0,
                  policy=sg.TimestepPolicy(per_block=2))


def test_kernel_stationary():
    opr, sr = operator("tilted", 0.2), eigs("tilted", 0.2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        run = sg.evolve(opr, opr.kernel_vector(), 1e4, sr, (1, 2))
    assert np.abs(run.norm - 1).max() <= 1e-9
    assert run.dist[1].max() <= 1e-9 and run.kernel_drift <= 1e-9
    with pytest.warns(NoPlateauDetected):
        rows, ratios = sg.plateau_report(run, predictions("tilted"))
    assert [r.k for r in rows] == [1] and rows[0].observed[1] == np.inf and not ratios


def _synthetic(rate, t, h=0.1, amp=0.8):
    d = amp * np.exp(-rate * t)
    return sg.EvolutionRun(h, t, np.sqrt(0.36 + d * d), {1: d}, {1: d}, 1.0, 0.0)


def test_synthetic_two_mode():
    t = np.concatenate([[0.0], np.geomspace(0.1, 2e3, 300)])
    fit = sg.decay_rate(_synthetic(0.0123, t))
    assert fit.rate == pytest.approx(0.0123, rel=1e-6)
    assert fit.rate_times_h == pytest.approx(0.00123, rel=1e-6)
    assert fit.rms < 1e-10 and fit.decades >= 3


def test_insufficient_window():
    t = np.linspace(0, 100, 200)
    with pytest.raises(InsufficientWindow):
        sg.decay_rate(_synthetic(0.05, t))  # only two decades of decay
    with pytest.raises(InsufficientWindow):
        sg.decay_rate(_synthetic(0.05, t), window=(1000.0, 2000.0))


def test_double_well_rate():
    run, slow, _ = _run("tilted", 0.1, (1, 2))
    fit = sg.decay_rate(run)
    assert 0.9 <= fit.rate_times_h / slow <= 1.1
    assert run.kernel_drift <= 1e-8
    assert np.all(np.diff(run.norm) <= 1e-9 * run.norm[:-1])


def test_step_halving():
    a, slow, _ = _run("tilted", 0.1, (1,))
    b, _, _ = _run("tilted", 0.1, (1,), fraction=0.05, per_block=16)
    ra, rb = sg.decay_rate(a).rate, sg.decay_rate(b).rate
    assert abs(ra / rb - 1) < 0.01


def test_double_well_single_plateau():
    run, _, _ = _run("tilted", 0.1, (1, 2))
    rows, ratios = sg.plateau_report(run, predictions("tilted"))
    assert [r.k for r in rows] == [1, 2]
    assert rows[1].observed[1] == rows[0].observed[0]


def test_triple_well_two_timescales():
    run, slow, sr = _run("triple", 0.08, (1, 2, 3))
    lam = sr.small_eigs.real
    late = sg.decay_rate(run, k=1)
    early = sg.decay_rate(run, k=2)
    assert abs(late.rate_times_h / lam[1] - 1) <= 0.1
    assert abs(early.rate_times_h / lam[2] - 1) <= 0.1
    assert early.window[0] < late.window[0]
    rows, ratios = sg.plateau_report(run, predictions("triple"))
    meta = [r for r in rows if r.k > 1]
    assert [r.k for r in meta] == [2, 3]
    assert meta[1].observed[1] == meta[0].observed[0]
    (ratio,) = ratios
    assert ratio["factor"] <= 10


def _coarse():
    return dz.assemble(pt.tilted_double_well(), BGK, 0.2, 60, 8, check_tail=False)


def _dense_trajectory(opr, u0, times):
    A = opr.matrix.toarray() / opr.h
    u = u0 / opr.norm(u0)
    out, cache = [u], {}
    for dt in np.diff(times):
        key = round(dt, 12)
        if key not in cache:
            cache[key] = scipy.linalg.expm(-dt * A)
        u = cache[key] @ u
        out.append(u)
    return np.array(out)


def test_dense_expm_oracle():
    opr = _coarse()
    sr = spc.small_eigenvalues(opr, 4)
    slow = float(sr.small_eigs[1].real)
    u0 = opr.from_coefficients(lambda n, x: np.exp(-4 * (x - 0.9) ** 2) * (n < 2))
    run = sg.evolve(opr, u0, 10 * opr.h / slow, sr, (1,), sg.default_policy(opr.h, slow))
    U = _dense_trajectory(opr, u0, run.t)
    P1 = sg.projectors(sr, opr, [1])[1]
    dist = np.array([opr.norm(u - P1(u)) for u in U])
    ref = sg.EvolutionRun(opr.h, run.t, np.array([opr.norm(u) for u in U]), {1: dist}, {1: dist}, 1.0, 0.0)
    # implicit Euler steps at the start and at step changes are first order
    err = np.abs(run.norm / ref.norm - 1)
    assert err.max() <= 5e-2
    assert err[run.t >= 200 * opr.h].max() <= 1e-5
    a, b = sg.decay_rate(run), sg.decay_rate(ref)
    assert a.rate == pytest.approx(b.rate, rel=1e-3)
    assert b.rate_times_h == pytest.approx(slow, rel=1e-3)


def test_cluster_complement_decays_fast():
    opr = _coarse()
    w = np.linalg.eigvals(opr.matrix.toarray())
    w = w[np.argsort(np.abs(w))]
    gap = w[2:].real.min()  # slowest mode outside the two-member cluster
    sr = spc.small_eigenvalues(opr, 4)
    P2 = sg.projectors(sr, opr, [2])[2]
    u0 = opr.from_coefficients(lambda n, x: np.exp(-4 * (x - 0.9) ** 2) * (n < 3))
    u0 = u0 - P2(u0)
    run = sg.evolve(opr, u0, 60 * opr.h / gap, sr, (1, 2), sg.TimestepPolicy(max_dt=0.1 * opr.h / gap))
    # fit after the transient and above the rounding level of the projection
    late = (run.t > 5 * opr.h / gap) & (run.norm > 1e-9)
    slope = -np.polyfit(run.t[late], np.log(run.norm[late]), 1)[0]
    assert slope * opr.h == pytest.approx(gap, rel=0.1)
    assert np.abs(run.dist[2] - run.norm).max() <= 1e-10


def test_norm_increase_detected():
    opr = _coarse()
    bad = dataclasses.replace(opr, matrix=-opr.matrix, _lu_cache={})
    with pytest.raises(SolverFailure):
        sg.evolve(bad, opr.kernel_vector() + 0.1 * np.ones(opr.size), 100.0)


def test_rows():
    run, _, _ = _run("tilted", 0.2, (1, 2), horizon=4)
    rows = run.rows()
    assert set(rows[0]) == {"t", "norm", "dist_1", "plateau_1", "dist_2", "plateau_2"}
    assert len(rows) == run.steps + 1
