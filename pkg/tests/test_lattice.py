import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dotcheck import parse_dot
from flexverif.casestudy import DISPLACEMENT
from flexverif.lattice import (
    ConstraintTemplate,
    DesignDimension,
    DimensionMismatch,
    SpecLattice,
    cover_count,
    hasse_edges,
    materialize,
    weaker_eq,
    weaker_eq_pointwise,
)
from flexverif.mdp import Mdp, SpecPredicate


def grid(*shape):
    return SpecLattice(
        tuple(DesignDimension(f"d{i}", "action_guard", tuple(range(1, n + 1)), lambda v: SpecPredicate.everything())
              for i, n in enumerate(shape))
    )


def test_weaker_eq_examples():
    f = (0, 0, 0)
    assert weaker_eq(f, f)
    assert weaker_eq((1, 0, 0), (0, 0, 0))
    assert not weaker_eq((1, 0, 0), (0, 1, 0)) and not weaker_eq((0, 1, 0), (1, 0, 0))
    with pytest.raises(DimensionMismatch):
        weaker_eq((0,), (0, 0))


@settings(max_examples=300)
@given(st.data())
def test_weaker_eq_is_partial_order(data):
    k = data.draw(st.integers(1, 4))
    pt = st.tuples(*[st.integers(0, 3)] * k)
    a, b, c = data.draw(pt), data.draw(pt), data.draw(pt)
    assert weaker_eq(a, a)
    if weaker_eq(a, b) and weaker_eq(b, a):
        assert a == b
    if weaker_eq(a, b) and weaker_eq(b, c):
        assert weaker_eq(a, c)


def test_edge_counts():
    assert len(hasse_edges(grid(2, 2))) == 4
    assert len(hasse_edges(grid(7))) == 6
    big = grid(10, 6, 9)
    assert big.size == 540
    assert len(hasse_edges(big)) == 1416 == 9 * 6 * 9 + 10 * 5 * 9 + 10 * 6 * 8 == cover_count((10, 6, 9))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=3))
def test_hasse_edges_are_exactly_the_covers(shape):
    lat = grid(*shape)
    pts = lat.points()
    covers = set()
    for strong, weak in itertools.permutations(pts, 2):
        if weaker_eq(weak, strong):
            between = [m for m in pts if m not in (strong, weak) and weaker_eq(m, strong) and weaker_eq(weak, m)]
            if not between:
                covers.add((strong, weak))
    assert set(hasse_edges(lat)) == covers
    assert len(covers) == cover_count(shape)


def test_dot_skeleton_and_colours():
    lat = grid(2, 2)
    nodes, edges = parse_dot(lat.to_dot())
    assert len(nodes) == 4 and len(edges) == 4
    assert all(color is None for _, color in nodes.values())
    assert nodes["f_0_0"][0] == "f_{1,1}"
    nodes, _ = parse_dot(lat.to_dot({(1, 1): ("1.0000", "red"), (0, 1): ("0.9500", "blue")}))
    assert nodes["f_1_1"] == ("f_{2,2}: 1.0000", "red")
    assert nodes["f_0_1"][1] == "blue"
    assert nodes["f_1_0"][1] is None
    # edges point from weaker to stronger so the strongest ends up on top with rankdir=BT
    assert ("f_1_0", "f_0_0") in edges


def test_dot_quotes_label_text():
    lat = grid(1)
    nodes, _ = parse_dot(lat.to_dot({(0,): ('say "hi"', None)}))
    assert nodes["f_0"][0] == 'f_{1}: say \\"hi\\"'


def test_point_checks():
    lat = grid(2, 3)
    with pytest.raises(DimensionMismatch):
        lat.check_point((0,))
    with pytest.raises(DimensionMismatch):
        lat.check_point((0, 3))


def test_dimension_validation():
    with pytest.raises(ValueError):
        DesignDimension("t", "horizon", (1, 2), "x <= $v")
    with pytest.raises(ValueError):
        DesignDimension("v", "action_guard", (1, 2))
    with pytest.raises(ValueError):
        DesignDimension("v", "action_guard", (2, 1), "x <= $v")
    with pytest.raises(ValueError):
        DesignDimension("v", "action_guard", (1, 2), "x <= $v", feature=(1,))
    with pytest.raises(ValueError):
        ConstraintTemplate("x <= $w")


def test_single_dimension_materialises_fragment():
    m = Mdp.from_transitions(1, {(0, "a"): {0: 1.0}, (0, "b"): {0: 1.0}})
    dim = DesignDimension("k", "action_guard", ("only-a", "all"),
                          lambda v: SpecPredicate.forbid([(0, "b")]) if v == "only-a" else SpecPredicate.everything())
    pred, horizon = materialize((0,), SpecLattice((dim,)))
    assert horizon is None
    assert pred.mask(m).tolist() == [True, False]


def test_case_study_weakest_is_everything(homecare, homecare_study):
    lat = homecare_study.lattice
    weakest = tuple(n - 1 for n in lat.shape)
    pred, horizon = lat.materialize(weakest)
    assert horizon == 10
    assert pred.mask(homecare).all()


def test_speed_one_rejects_faster_moves(homecare, homecare_study):
    lat = homecare_study.lattice
    mask = lat.fragment_mask(homecare, 1, 0)
    speeds = {}
    for c in range(homecare.n_choices):
        speeds.setdefault(homecare.actions[homecare.choice_action[c]], set()).add(bool(mask[c]))
    for name, allowed in speeds.items():
        if name.startswith(("n", "s", "e", "w")) and name[1:2].isdigit():
            k = int(name[1:].split("_")[0])
            assert allowed == ({True} if k <= 1 else {False}), name
        else:
            assert allowed == {True}, name


def test_case_study_chains_are_monotone(homecare, homecare_study):
    assert homecare_study.lattice.monotonicity_violations(homecare) == []


def test_pointwise_order_agrees_with_index_order(homecare, homecare_study):
    lat = homecare_study.lattice
    rng = np.random.default_rng(7)
    for _ in range(30):
        f = tuple(int(rng.integers(n)) for n in lat.shape)
        g = tuple(int(rng.integers(0, i + 1)) for i in f)
        assert weaker_eq(f, g)
        assert weaker_eq_pointwise(lat, homecare, f, g)


def test_choice_levels_match_fragments(homecare, homecare_study):
    lat = homecare_study.lattice
    levels = lat.choice_levels(homecare, 1)
    for i in range(len(lat.dimensions[1])):
        np.testing.assert_array_equal(levels <= i, lat.fragment_mask(homecare, 1, i))


def test_template_next_sees_successor():
    from flexverif.lang import load_model

    m = load_model("mdp module m x:[0..3] init 0; [] x<3 -> (x'=x+1); [] x<2 -> (x'=x+2); [] x=3 -> true; endmodule")
    step = ConstraintTemplate("next(x) - x <= $v")
    assert step.mask(m, 1).tolist() == [True, False, True, False, True, True]
    disp = ConstraintTemplate(DISPLACEMENT.replace("rx", "x").replace("ry", "x") + " <= 2 * $v")
    assert disp.mask(m, 2).all()
