import itertools
import math
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmdcsim.stats import cov, distance_miles
from rmdcsim.subgraph import (
    Subgraph,
    complementary_window,
    enumerate_candidates,
    identify,
    rank_candidates,
    reidentify,
    select_disjoint,
)

from helpers import make_site


def _grid_sites(n, rng, spread=1.0):
    return [make_site(f"s{i:02d}", rng.uniform(0, 100, 24) + 1, lat=40 + rng.uniform(0, spread),
                      lon=-100 + rng.uniform(0, spread)) for i in range(n)]


def test_twenty_candidates_for_six_sites():
    sites = _grid_sites(6, np.random.default_rng(0), spread=30)
    cands = enumerate_candidates(sites, 3, math.inf)
    assert len(cands) == math.comb(6, 3) == 20
    assert [c.member_ids for c in cands] == sorted(c.member_ids for c in cands)


def test_bound_excludes_far_endpoints():
    # 0, 300, 600 miles along the equator
    deg = 300 / (2 * math.pi * 3958.8 / 360)
    sites = [make_site(f"p{i}", [1, 2], lat=0, lon=i * deg) for i in range(3)]
    assert enumerate_candidates(sites, 3, 500) == []
    assert len(enumerate_candidates(sites, 2, 500)) == 2


def test_colocated_pairs():
    sites = [make_site(f"c{i}", [1, 2]) for i in range(4)]
    assert len(enumerate_candidates(sites, 2, 0.0)) == math.comb(4, 2)


def test_errors():
    sites = [make_site(f"c{i}", [1, 2]) for i in range(2)]
    with pytest.raises(ValueError):
        enumerate_candidates(sites, 1)
    with pytest.raises(ValueError):
        enumerate_candidates(sites, 3)


def test_metrics_match_oracle():
    rng = np.random.default_rng(5)
    sites = _grid_sites(5, rng)
    by_id = {s.site_id: s for s in sites}
    for c in enumerate_candidates(sites, 3, 500):
        agg = [sum(by_id[m].trace.samples[t] for m in c.member_ids) for t in range(24)]
        assert c.agg_cov == pytest.approx(statistics.pstdev(agg) / statistics.fmean(agg), rel=1e-9)
        assert c.min_agg_power_watts == pytest.approx(min(agg), rel=1e-12)
        span = max(distance_miles(by_id[a].location, by_id[b].location)
                   for a, b in itertools.combinations(c.member_ids, 2))
        assert c.max_pairwise_miles == span


def test_rank_rules():
    anti = [make_site("a", [1, 0] * 4), make_site("b", [0, 1] * 4), make_site("c", [1, 0] * 4)]
    ranked = rank_candidates(enumerate_candidates(anti, 2))
    assert ranked[0].agg_cov == 0.0 and ranked[-1].agg_cov > 0
    x = Subgraph(("a", "b"), 0.2, 10.0, 0)
    y = Subgraph(("c", "d"), 0.2, 20.0, 0)
    assert rank_candidates([x, y]) == [y, x]
    assert rank_candidates([x]) == [x]


def test_select_disjoint_greedy():
    s = lambda ids, c: Subgraph(tuple(ids), c, 0, 0)
    ranked = [s("ABC", 0.1), s("ADE", 0.2), s("DEF", 0.3)]
    assert [g.member_ids for g in select_disjoint(ranked)] == [("A", "B", "C"), ("D", "E", "F")]
    disjoint = [s("AB", 0.1), s("CD", 0.2)]
    assert select_disjoint(disjoint) == disjoint


def test_six_sites_two_subgraphs(fixtures):
    from rmdcsim.config import load_config, load_sites

    sites = load_sites(load_config(fixtures / "six" / "config.json"))
    chosen = identify(sites, 3, 500)
    assert len(chosen) == 2
    assert identify(sites, 3, 500) == chosen


@given(st.integers(0, 2**31), st.integers(3, 8), st.integers(2, 3))
def test_selection_invariants(seed, n, k):
    rng = np.random.default_rng(seed)
    sites = _grid_sites(n, rng, spread=8.0)
    cands = rank_candidates(enumerate_candidates(sites, k, 500))
    chosen = select_disjoint(cands)
    seen = set()
    for i, sg in enumerate(chosen):
        assert seen.isdisjoint(sg.member_ids) and sg.max_pairwise_miles <= 500
        # greedy optimality against every still-available candidate
        for c in cands:
            if seen.isdisjoint(c.member_ids):
                assert sg.agg_cov <= c.agg_cov
        seen.update(sg.member_ids)


@given(st.integers(0, 2**31))
def test_antiphase_triple_smooths(seed):
    rng = np.random.default_rng(seed)
    base = rng.uniform(0, 1, 48)
    a, b = base, 1 - base
    c = rng.uniform(0.4, 0.6, 48)
    sites = [make_site("a", a + 0.01), make_site("b", b + 0.01), make_site("c", c)]
    (sg,) = enumerate_candidates(sites, 3)
    indiv = [cov(s.trace.samples) for s in sites]
    if min(indiv) > 0:
        assert sg.agg_cov < min(indiv)


def test_reidentify():
    wave = [1, 0] * 6
    sites = [make_site("a", wave), make_site("b", [1 - v for v in wave]),
             make_site("c", [1, 1, 0, 0] * 3), make_site("d", [0, 0, 1, 1] * 3)]
    current = identify(sites, 2, 500)
    assert reidentify(sites, current, 2, 500)[1] == []
    # swap b and c traces: the pairing flips
    swapped = [sites[0], make_site("b", [1, 1, 0, 0] * 3), make_site("c", [1 - v for v in wave]), sites[3]]
    new, changed = reidentify(swapped, current, 2, 500)
    assert {"b", "c"} <= set(changed)
    # d goes dark and a spare site is around: the {c, d} pair dissolves
    spare = make_site("e", [1.0] * 12)
    current = identify(sites + [spare], 2, 500)
    assert ("c", "d") in [sg.member_ids for sg in current]
    dark = sites[:3] + [make_site("d", [0.0] * 12), spare]
    new, changed = reidentify(dark, current, 2, 500)
    assert ("c", "d") not in [sg.member_ids for sg in new]
    assert {"c", "d"} <= set(changed)


def test_complementary_window():
    assert complementary_window([5.0] * 10, 0.4, 3) == [(0, 10)]
    assert complementary_window([5.0] * 2, 0.4, 3) == []
    calm = [10.0] * 14
    chaos = [0.0, 20.0] * 7
    spans = complementary_window(calm + chaos + calm, 0.4, 7)
    assert spans[0][0] == 0 and spans[-1][0] + spans[-1][1] == 42
    for start, length in spans:
        seg = (calm + chaos + calm)[start:start + length]
        for i in range(len(seg) - 6):
            assert cov(seg[i:i + 7]) < 0.4
