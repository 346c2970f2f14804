import json

import pytest
from hypothesis import given, settings, strategies as st

from cascademap import dse
from cascademap.arch import vek280_arch
from cascademap.design import DesignError, is_pow2, save_design
from cascademap.model_ir import build_model, bundled_model

from oracles import generate_and_filter

A = vek280_arch()


def small_arch(rows, cols, plio, budget=None):
    return A.with_(rows=rows, cols=cols, plio=plio, aie_budget=budget)


def test_enumerate_unit_grid():
    m = build_model("t", (8, 8), [8])
    assert set(dse.enumerate_mappings(m, small_arch(1, 1, 2))) == {((1, 1, 1),)}


def test_enumerate_32_cubed():
    m = build_model("t", (32, 32), [32])
    got = set(dse.enumerate_mappings(m, A.with_(plio=16)))
    assert ((2, 2, 1),) in got
    assert all(is_pow2(x) for mp in got for x in mp[0])
    assert got == generate_and_filter(m, 8, 38, 16)


def test_enumerate_over_budget_is_empty():
    m = build_model("t", (8, 8), [8, 8])
    assert list(dse.enumerate_mappings(m, small_arch(1, 1, 4))) == []


@pytest.mark.parametrize("name, rows, cols, plio", [
    ("two-layer", 3, 5, 8), ("deepsets-32", 4, 4, 6), ("jsc-m", 2, 8, 4),
])
def test_enumerate_matches_generate_and_filter(name, rows, cols, plio):
    m = bundled_model(name)
    got = list(dse.enumerate_mappings(m, small_arch(rows, cols, plio)))
    assert len(got) == len(set(got))
    assert set(got) == generate_and_filter(m, rows, cols, plio)


def test_enumeration_order_is_lexicographic():
    m = build_model("t", (32, 32), [32])
    got = [mp[0] for mp in dse.enumerate_mappings(m, A)]
    assert got == sorted(got)


@pytest.mark.parametrize("prev, nxt, ok", [
    ((4, 2, 1), (4, 4, 1), True), ((4, 2, 1), (2, 4, 1), False), ((4, 2, 2), (4, 2, 1), False),
])
def test_cascade_eligible(prev, nxt, ok):
    assert dse.cascade_eligible(prev, nxt) is ok


@pytest.mark.parametrize("prev, nxt, kind, members", [
    ((2, 1, 1), (2, 1, 2), "duplicate", {"duplicate"}),
    ((2, 1, 1), (4, 1, 1), "partition", {"partition"}),
    ((2, 1, 1), (4, 1, 2), "mixed", {"partition", "duplicate"}),
    ((4, 1, 1), (2, 1, 1), "gather", {"gather"}),
    ((2, 2, 1), (2, 1, 1), "one-to-one", set()),
])
def test_classify_traffic(prev, nxt, kind, members):
    t = dse.classify_traffic(prev, nxt)
    assert t.kind == kind and set(t.members) == members


p2 = st.sampled_from([1, 2, 4, 8])


@given(p2, p2, p2, p2, p2)
def test_cascade_never_duplicates(a, b, c, b2, c2):
    if dse.cascade_eligible((a, b, c), (a, b2, c2)):
        assert "duplicate" not in dse.classify_traffic((a, b, c), (a, b2, c2)).members


@given(p2, p2)
def test_matched_rows_single_column_is_one_to_one(a, b):
    assert dse.classify_traffic((a, b, 1), (a, 1, 1)).kind == "one-to-one"


def test_place_two_cascade_layers():
    m = build_model("t", (64, 32), [32, 16])
    pl = dse.place_layers(m, ((4, 2, 1), (4, 2, 1)), A)
    assert [(r.row, r.col) for r in pl.rects] == [(0, 0), (0, 2)]
    assert pl.adjacency == (True,)
    d = dse.make_design(m, ((4, 2, 1), (4, 2, 1)), A)
    assert d.comm.edges[1].decision == "cascade"


def test_place_mismatched_rows_uses_dma():
    m = build_model("t", (64, 32), [32, 16])
    d = dse.make_design(m, ((2, 2, 1), (4, 2, 1)), A)
    assert not d.placement.adjacency[0]
    assert d.comm.edges[1].decision == "dma"


def test_place_full_grid():
    m = build_model("t", (64, 32), [32])
    pl = dse.place_layers(m, ((2, 2, 1),), small_arch(2, 2, 8))
    assert (pl.rects[0].row, pl.rects[0].col) == (0, 0)


def test_duplicate_edge_multicasts():
    m = build_model("t", (16, 64), [32, 32])
    d = dse.make_design(m, ((2, 1, 1), (2, 1, 2)), A)
    e = d.comm.edges[1]
    assert e.decision == "dma" and e.traffic == ("duplicate",)
    assert len(e.channels) == 2 and all(len(ch.dsts) == 2 for ch in e.channels)


def test_partition_edge_halves_payload():
    m = build_model("t", (32, 64), [32, 32])
    d = dse.make_design(m, ((2, 1, 1), (4, 1, 1)), A)
    e = d.comm.edges[1]
    assert e.traffic == ("partition",)
    assert len(e.channels) == 4
    assert {ch.bits for ch in e.channels} == {8 * 32 * 8}


def test_aggregation_sits_east():
    m = bundled_model("deepsets-32")
    mp = ((2, 1, 1), (2, 1, 1), (2, 2, 1), (2, 1, 1), (1, 1, 1), (1, 1, 1))
    d = dse.make_design(m, mp, A)
    p, q = d.placement.rects[2], d.placement.rects[3]
    assert (q.row, q.col, q.height, q.width) == (p.row, p.col_end, 2, 1)
    assert d.comm.edges[3].decision == "shm"


def test_mapping_checks():
    m = bundled_model("deepsets-32")
    good = ((2, 1, 1), (2, 1, 1), (2, 2, 1), (2, 1, 1), (1, 1, 1), (1, 1, 1))
    dse.check_mapping(m, good, A)
    with pytest.raises(DesignError, match="C = 1"):
        dse.check_mapping(m, good[:2] + ((2, 1, 2), (2, 1, 1)) + good[4:], A)
    with pytest.raises(DesignError, match="aggregation"):
        dse.check_mapping(m, good[:3] + ((4, 1, 1),) + good[4:], A)
    with pytest.raises(DesignError, match="power-of-2"):
        dse.check_mapping(m, ((3, 1, 1),) + good[1:], A)
    with pytest.raises(DesignError, match="PLIO"):
        dse.check_mapping(bundled_model("motivating"), ((2, 2, 2),), A.with_(plio=5))


def _scores(designs):
    return [d.estimate.total_cycles for d in designs]


@pytest.mark.parametrize("name, rows, cols, plio", [
    ("two-layer", 4, 6, 8), ("motivating", 8, 38, 32), ("deepsets-32", 3, 6, 6),
])
def test_search_optimal_vs_exhaustive(name, rows, cols, plio, profile):
    m = bundled_model(name)
    a = small_arch(rows, cols, plio)
    best = dse.search(m, a, profile).best
    every = dse.exhaustive_search(m, a, profile)
    assert best.estimate.total_cycles == every[0].estimate.total_cycles
    assert best.mapping == every[0].mapping


@st.composite
def small_models(draw):
    m = draw(st.sampled_from([16, 32, 64]))
    k = draw(st.sampled_from([8, 16, 32]))
    ns = draw(st.lists(st.sampled_from([16, 32, 64]), min_size=1, max_size=3))
    return build_model("r", (m, k), [{"N": n, "bias": draw(st.booleans()), "relu": True} for n in ns])


@settings(max_examples=15)
@given(small_models(), st.sampled_from([(2, 4), (4, 4), (3, 6)]), st.sampled_from([4, 8]))
def test_search_optimal_random(m, grid, plio):
    from cascademap.arch import vek280_profile
    prof = vek280_profile()
    a = small_arch(*grid, plio)
    try:
        res = dse.search(m, a, prof, topk=3)
    except dse.InfeasibleError:
        assert not dse.exhaustive_search(m, a, prof)
        return
    every = dse.exhaustive_search(m, a, prof)
    assert _scores(res.ranked) == _scores(every)[:len(res.ranked)]
    assert [d.mapping for d in res.ranked] == [d.mapping for d in every[:len(res.ranked)]]


def test_topk_nondecreasing(profile):
    res = dse.search(bundled_model("jsc-m"), A, profile, topk=5)
    s = _scores(res.ranked)
    assert len(s) == 5 and s == sorted(s)


def test_search_deterministic(profile):
    m = bundled_model("deepsets-32")
    d1 = dse.search(m, A, profile).best
    d2 = dse.search(m, A, profile).best
    assert json.dumps(d1.to_dict(), sort_keys=True) == json.dumps(d2.to_dict(), sort_keys=True)


def test_search_infeasible(profile):
    with pytest.raises(dse.InfeasibleError) as info:
        dse.search(bundled_model("jsc-m"), small_arch(1, 1, 32), profile)
    assert info.value.constraint == "AIE budget"
    with pytest.raises(dse.InfeasibleError) as info:
        dse.search(bundled_model("jsc-m"), small_arch(8, 38, 1), profile)
    assert info.value.constraint == "PLIO budget"


@pytest.mark.parametrize("name", ["jsc-m", "deepsets-32", "two-layer"])
def test_design_invariants(name, profile):
    m = bundled_model(name)
    for d in dse.search(m, A, profile, topk=4).ranked:
        dse.check_placement(d.placement, d.mapping)
        dse.check_mapping(m, d.mapping, A)
        dse.check_comm_plan(d.comm, m, d.mapping)
        a1, b1, _ = d.mapping[0]
        an, _, cn = d.mapping[-1]
        assert a1 * b1 + an * cn <= A.plio


def test_design_file_roundtrip(tmp_path, profile):
    m = bundled_model("deepsets-32")
    d = dse.search(m, A, profile).best
    path = tmp_path / "d.json"
    save_design(d, path)
    back = dse.load_design(str(path), m, A, profile)
    assert back.to_dict() == d.to_dict()
    assert back.estimate.total_cycles == d.estimate.total_cycles


def test_design_file_rejects_overlap(tmp_path, profile):
    m = bundled_model("two-layer")
    d = dse.make_design(m, ((1, 4, 1), (1, 4, 1)), A, profile)
    dd = d.to_dict()
    dd["placement"][1] = list(dd["placement"][0])
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(dd))
    with pytest.raises(DesignError, match="overlap"):
        dse.load_design(str(path), m, A, profile)


def test_design_file_rejects_wrong_model(tmp_path, profile):
    d = dse.make_design(bundled_model("two-layer"), ((1, 4, 1), (1, 4, 1)), A, profile)
    with pytest.raises(DesignError):
        dse.design_from_dict(d.to_dict(), bundled_model("motivating"), A, profile)
