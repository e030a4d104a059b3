from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cnneq.channels import ProakisBConfig
from cnneq.dse import (
    DesignSpace,
    ParetoPoint,
    best_within,
    enumerate_space,
    fronts_by_family,
    mac_budget,
    pareto_front,
    run_dse,
    write_front,
    write_points,
)
from cnneq.equalizers import FirConfig
from cnneq.errors import UsageError
from cnneq.training import TrainConfig
from oracles import dominance_front


def test_paper_space_counts():
    configs = enumerate_space(DesignSpace.paper())
    fams = [type(c).__name__ for c in configs]
    assert fams.count("CnnConfig") == 135
    assert fams.count("FirConfig") == 15
    assert fams.count("VolterraConfig") == 9 * 7 * 4
    assert len(set(configs)) == len(configs)
    assert enumerate_space(DesignSpace.paper()) == configs


def test_desk_space_is_small():
    configs = enumerate_space(DesignSpace.desk(), ("cnn",))
    assert len(configs) == 4
    with pytest.raises(UsageError):
        DesignSpace.preset("huge")


def test_mac_budget():
    assert abs(mac_budget(9648, 40e9, 200e6) - 57.9) <= 0.05
    with pytest.raises(UsageError):
        mac_budget(0, 1, 1)


def _pts(pairs, fam="cnn"):
    return [ParetoPoint(f"p{i}", fam, Fraction(m), b) for i, (m, b) in enumerate(pairs)]


pairs_st = st.lists(
    st.tuples(st.integers(1, 30), st.sampled_from([1e-4, 2e-4, 5e-4, 1e-3, 3e-3, 1e-2])),
    min_size=1,
    max_size=40,
)


@given(pairs_st)
def test_front_matches_dominance_oracle(pairs):
    front = pareto_front(_pts(pairs))
    got = sorted((float(p.mac), p.ber) for p in front)
    assert got == dominance_front([(float(m), b) for m, b in pairs])


@given(pairs_st)
def test_front_is_nondominated_and_complete(pairs):
    pts = _pts(pairs)
    front = pareto_front(pts)
    for p in front:
        assert not any(q.mac <= p.mac and q.ber <= p.ber and (q.mac < p.mac or q.ber < p.ber) for q in pts)
    for p in pts:
        if p not in front:
            assert any(q.mac <= p.mac and q.ber <= p.ber for q in front)


def test_front_skips_invalid_and_rejects_empty():
    pts = _pts([(1, 0.1), (2, 0.01)])
    pts[1].valid = False
    assert [p.config_id for p in pareto_front(pts)] == ["p0"]
    with pytest.raises(UsageError):
        pareto_front([])


def test_fronts_by_family_and_budget():
    pts = _pts([(10, 1e-3), (40, 5e-4)], "cnn") + _pts([(5, 2e-3), (57, 1e-3)], "fir")
    fr = fronts_by_family(pts)
    assert set(fr) == {"cnn", "fir", "all"}
    assert best_within(pts, "fir", 57) == 1e-3
    assert np.isnan(best_within(pts, "volterra", 57))


def test_run_dse_is_order_independent(tmp_path):
    tc = TrainConfig(iterations=20, eval_symbols=2000, seeds=(1, 2))
    cfgs = [FirConfig(3), FirConfig(9)]
    ch = ProakisBConfig()
    a, _ = run_dse(cfgs, ch, tc, jobs=1)
    b, _ = run_dse(cfgs, ch, tc, jobs=2)
    assert [(p.config_id, p.bers) for p in a] == [(p.config_id, p.bers) for p in b]
    assert all(p.ber == max(p.bers) for p in a)
    write_points(tmp_path / "p.csv", a, 2, ["x"])
    write_front(tmp_path / "f.csv", fronts_by_family(a))
    lines = [l for l in (tmp_path / "p.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == 3


def test_front_listed_examples():
    pts = _pts([(10, 1e-2), (20, 1e-3), (15, 5e-2)])
    assert [(int(p.mac), p.ber) for p in pareto_front(pts)] == [(10, 1e-2), (20, 1e-3)]
    one = _pts([(3, 0.2)])
    assert pareto_front(one) == one


def test_budget_proportional_and_selected_fits():
    assert mac_budget(9648, 40e9, 100e6) == pytest.approx(mac_budget(9648, 40e9, 200e6) / 2)
    from cnneq.equalizers import CnnConfig, mac_per_symbol

    assert mac_per_symbol(CnnConfig()) <= mac_budget(9648, 40e9, 200e6)


@given(pairs_st)
def test_best_cnn_within_budget_non_increasing(pairs):
    pts = _pts(pairs)
    budgets = sorted({float(p.mac) for p in pts})
    best = [best_within(pts, "cnn", b) for b in budgets]
    assert all(b1 <= b0 for b0, b1 in zip(best, best[1:]))


def test_singleton_space():
    s = DesignSpace(v_p=(8,), layers=(3,), kernel=(9,), channels=(5,), fir_taps=(), volterra=())
    assert len(enumerate_space(s)) == 1
