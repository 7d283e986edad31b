import numpy as np
import pytest

from boltzspec import landscape as ls, potential as pt
from boltzspec.errors import LabelingHypothesisViolated, NoMinima

from .conftest import tilted, triple
from .oracles import bfs_components, bracket_roots, minimax_to


def _cubic(x):
    return x ** 3 - x + 0.1


def test_critical_points_match_bracketing():
    _, crit, _ = tilted()
    ref = bracket_roots(_cubic, -3, 3)
    got = np.sort([c.location[0] for c in crit])
    assert got.size == 3
    assert np.allclose(got, ref, atol=1e-12)
    idx = {round(c.location[0], 6): c.index for c in crit}
    assert [idx[round(r, 6)] for r in ref] == [0, 1, 0]


def test_symmetric_well_roots_and_tie():
    P = pt.double_well()
    crit = ls.find_critical_points(P)
    ref = bracket_roots(lambda x: x ** 3 - x, -2, 2, n=20000)
    assert np.allclose(np.sort([c.location[0] for c in crit]), ref, atol=1e-12)
    with pytest.raises(LabelingHypothesisViolated):
        ls.build_labeling(P, crit)


def test_single_well_rejected():
    with pytest.raises(NoMinima):
        ls.find_critical_points(pt.harmonic())


def test_seed_count_guard():
    with pytest.raises(ValueError):
        ls.find_critical_points(pt.tilted_double_well(), seeds_per_axis=4)


def test_tilted_labeling_values():
    P, _, L = tilted()
    s = bracket_roots(_cubic, -0.5, 0.5)[0]
    m = bracket_roots(_cubic, 0.5, 1.5)[0]
    assert L.n0 == 2
    assert L.separating_values == pytest.approx([0.5 * float(P.eval(np.array([s])))], abs=1e-12)
    top = L.non_global()[0]
    assert top.point.location[0] == pytest.approx(m, abs=1e-12)
    assert top.S == pytest.approx(0.5 * float(P.eval(np.array([s])) - P.eval(np.array([m]))), abs=1e-12)
    lo, hi = top.interval
    assert lo == pytest.approx(s, abs=1e-9)
    assert 0.5 * float(P.eval(np.array([hi]))) == pytest.approx(top.sigma, abs=1e-10)


def _minimax_oracle(P, n=10_000):
    """Barrier heights of every non-global minimum by Dijkstra on an independent grid."""
    x = np.linspace(*P.window[0], n)
    U = 0.5 * P.eval(x[:, None])
    quantum = np.abs(np.diff(U)).max()
    return x, U, quantum


def test_triple_well_minimax_barriers():
    P, crit, L = triple()
    x, U, q = _minimax_oracle(P)
    minima = [c for c in crit if c.index == 0]
    for e in L.non_global():
        src = (int(np.argmin(np.abs(x - e.point.location[0]))),)
        deeper = [(int(np.argmin(np.abs(x - c.location[0]))),) for c in minima if c.value < e.point.value]
        sigma = minimax_to(U, src, deeper)
        assert abs(sigma - e.sigma) <= 2 * q
        assert abs((sigma - U[src]) - e.S) <= 2 * q


def test_triple_well_labels():
    _, _, L = triple()
    assert [(m.rank, m.sub) for m in L.minima] == [(1, 1), (2, 1), (3, 1)]
    assert [round(float(m.point.location[0]), 6) for m in L.minima] == [1.8, -2.0, 0.0]
    assert [round(float(m.saddles[0].location[0]), 6) for m in L.non_global()] == [-1.1, 0.9]
    vals = L.separating_values
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_triple_well_component_counts():
    # BFS on a 10^4 grid: number of sublevel components between the separating values
    P, _, L = triple()
    x, U, q = _minimax_oracle(P)
    s2, s3 = L.separating_values
    top_min = max(m.point.value for m in L.minima) / 2
    for level, want in ((s2 + 5 * q, 1), (0.5 * (s2 + s3), 2), (0.5 * (s3 + max(top_min, -1)), 3)):
        if level <= top_min:
            continue
        _, count = bfs_components(U < level)
        assert count == want


def test_component_count_monotone_above_minima():
    P, _, L = triple()
    x, U, _ = _minimax_oracle(P, 2000)
    top_min = max(m.point.value for m in L.minima) / 2
    levels = np.linspace(top_min + 1e-3, U.max(), 40)
    counts = [bfs_components(U < lv)[1] for lv in levels]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[0] == 3 and counts[-1] == 1


def test_regions_match_bfs():
    _, _, L = triple()
    for e in L.non_global():
        delta = L.separating_values[0] - L.separating_values[1]
        mask = L.grid.values < e.sigma - min(2 * L.grid.quantum, 0.25 * delta)
        labels, _ = bfs_components(mask)
        node = L.grid.nearest(e.point.location)
        assert np.array_equal(labels == labels[node], e.region)


def test_2d_separating_value():
    P = pt.double_well_2d()
    _, L = ls.analyze(P)
    s = bracket_roots(_cubic, -0.5, 0.5)[0]
    ref = 0.5 * float(P.eval(np.array([s, 0.0])))
    assert L.separating_values[0] == pytest.approx(ref, abs=1e-12)
    assert np.allclose(L.non_global()[0].saddles[0].location, [s, 0.0], atol=1e-10)
    # minimax on an independent 201^2 grid
    n = 201
    ax = np.linspace(-2.5, 2.5, n)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    U = 0.5 * P.eval(np.stack([X, Y], -1))
    q = max(np.abs(np.diff(U, axis=0)).max(), np.abs(np.diff(U, axis=1)).max())
    m = L.non_global()[0].point.location
    g = L.global_minimum.point.location
    src = tuple(int(np.argmin(np.abs(ax - c))) for c in m)
    tgt = tuple(int(np.argmin(np.abs(ax - c))) for c in g)
    assert abs(minimax_to(U, src, [tgt]) - ref) <= 2 * q


def test_lift_check():
    P, _, L = tilted()
    rep = ls.lift_check_W(P, L)
    assert rep["max_value_diff"] <= 2 * rep["quantum"]
    assert np.allclose(rep["W_saddles"][0], [L.non_global()[0].saddles[0].location[0], 0.0])


@pytest.mark.parametrize("c", [-3.0, 0.7, 10.0])
def test_shift_invariance(c):
    P, _, L = triple()
    _, L2 = ls.analyze(P.shifted(c))
    assert np.allclose(L2.separating_values, np.array(L.separating_values) + c / 2, atol=1e-10)
    for a, b in zip(L.minima, L2.minima):
        assert (a.rank, a.sub) == (b.rank, b.sub)
        if not a.is_global:
            assert b.S == pytest.approx(a.S, abs=1e-10)


def test_to_dict_roundtrip_fields():
    _, _, L = triple()
    d = L.to_dict()
    assert [m["label"] for m in d["minima"]] == [[1, 1], [2, 1], [3, 1]]
    assert d["minima"][0]["sigma"] is None
