import itertools

import numpy as np
import pytest

from flexverif.casestudy import (
    RISK_TABLE,
    HomecareParams,
    InvalidParams,
    OutOfRange,
    default_dimensions,
    generate_model,
    risk,
)
from flexverif.lang import load_model, parse, print_model
from flexverif.lattice import SpecLattice, weaker_eq
from flexverif.mdp import restrict, validate
from flexverif.pctl import parse_query, solve_until

QUERY = parse_query('Pmax=? [ !"service" U "service" ]')


def state_of(m, **want):
    cols = m.variable_columns()
    hit = np.ones(m.n_states, dtype=bool)
    for k, v in want.items():
        hit &= cols[k] == v
    idx = np.flatnonzero(hit)
    assert len(idx), want
    return int(idx[0])


def test_default_model_is_clean(homecare):
    assert validate(homecare) == []
    assert set(homecare.var_names) == {"turn", "rx", "ry", "hx", "hy", "b", "attended"}
    assert {"service", "charger", "robot_turn"} <= set(homecare.labels)


@pytest.mark.parametrize(
    "kw",
    [
        dict(battery_capacity=0),
        dict(grid_w=1, grid_h=1),
        dict(human_init=(0, 0)),
        dict(human_move_prob=0.3),
        dict(charger=(5, 0)),
        dict(max_speed=0),
    ],
)
def test_invalid_params(kw):
    with pytest.raises(InvalidParams):
        generate_model(HomecareParams(**kw))


def test_risk_table():
    assert [risk(v) for v in range(1, 7)] == list(map(float, RISK_TABLE))
    assert risk(3) < 5 and risk(5) > 10
    with pytest.raises(OutOfRange):
        risk(7)
    with pytest.raises(ValueError):
        risk(1, (1, 2, 9, 9, 9))


def test_lattice_size_and_varied_values():
    dims = default_dimensions()
    assert SpecLattice(dims).size == 540
    assert sum(len(d) for d in dims) == 25


def test_human_moves_fold_blocked_directions_into_stay(homecare):
    # human in the far corner has two neighbours: 0.2 each, stay 0.6
    s = state_of(homecare, turn=1, hx=4, hy=4, rx=0, ry=0)
    (c,) = list(homecare.choices_of(s))
    lo, hi = homecare.choice_ptr[c], homecare.choice_ptr[c + 1]
    probs = sorted(homecare.probs[lo:hi].tolist())
    assert probs == pytest.approx([0.2, 0.2, 0.6])


def test_robot_moves_drain_battery_and_charger_refills(homecare):
    cols = homecare.variable_columns()
    s = state_of(homecare, turn=0, rx=0, ry=0, hx=4, hy=4, b=25)
    for name in homecare.enabled(s):
        dist = homecare.distribution(s, name)
        (t, p), = dist.entries
        moved = abs(cols["rx"][t] - 0) + abs(cols["ry"][t] - 0)
        assert cols["b"][t] == 25 - moved
    # a move that lands on the charger resets the battery
    away = np.flatnonzero((cols["turn"] == 0) & (cols["rx"] == 0) & (cols["ry"] == 2) & (cols["b"] < 25))
    assert len(away)
    s = int(away[0])
    t = homecare.distribution(s, "s2_chg").entries[0][0]
    assert (cols["ry"][t], cols["b"][t]) == (0, 25)


def test_no_move_onto_the_human(homecare):
    cols = homecare.variable_columns()
    robot_turn = cols["turn"][homecare.trans_source] == 0
    same = (cols["rx"][homecare.targets] == cols["hx"][homecare.targets]) & (
        cols["ry"][homecare.targets] == cols["hy"][homecare.targets]
    )
    assert not np.any(robot_turn & same)


def test_empty_battery_only_stays():
    m = load_model(generate_model(HomecareParams(battery_capacity=2, grid_w=3, grid_h=3, human_init=(2, 2))))
    cols = m.variable_columns()
    empty = np.flatnonzero((cols["b"] == 0) & (cols["turn"] == 0))
    assert len(empty)
    for s in empty:
        assert m.enabled(int(s)) == ["stay"]


def test_generated_text_round_trips(homecare_text):
    ast = parse(homecare_text)
    assert parse(print_model(ast)) == ast


def test_smaller_grid_probabilities_monotone():
    p = HomecareParams(grid_w=3, grid_h=3, human_init=(2, 2), battery_capacity=6, max_speed=2)
    m = load_model(generate_model(p))
    lat = SpecLattice(default_dimensions())
    vals = {}
    for f in [(g, d, z) for g in (0, 2, 4) for d in (0, 1, 2, 3) for z in (0, 3, 5, 8)]:
        r = restrict(m, lat.point_mask(m, f))
        vals[f] = solve_until(r, QUERY.with_bound(2 * lat.horizon(f)))[r.initial]
    for f, g in itertools.permutations(vals, 2):
        if weaker_eq(g, f):
            assert vals[g] >= vals[f] - 1e-9
