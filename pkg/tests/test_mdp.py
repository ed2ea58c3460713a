import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexverif.mdp import (
    STUTTER,
    DeadlockAfterRestriction,
    Distribution,
    Mdp,
    SpecPredicate,
    conj,
    reachable,
    restrict,
    transition_set,
    validate,
)
from oracles import random_choices, random_labels, to_mdp


def chain3():
    return Mdp.from_transitions(3, {(0, "a"): {1: 1.0}, (1, "a"): {2: 1.0}, (2, "a"): {2: 1.0}})


def test_single_self_loop_is_valid():
    m = Mdp.from_transitions(1, {(0, "loop"): {0: 1.0}})
    assert validate(m) == []


def test_distribution_sum_violation():
    m = Mdp.from_transitions(3, {(0, "a"): {1: 0.5, 2: 0.4}, (1, "a"): {1: 1.0}, (2, "a"): {2: 1.0}})
    kinds = [(v.kind, v.state) for v in validate(m)]
    assert kinds == [("distribution-sum", 0)]
    assert "distribution sums to 0.9" in validate(m)[0].message


def test_deadlock_names_state():
    m = Mdp.from_transitions(2, {(0, "a"): {1: 1.0}})
    (v,) = validate(m)
    assert v.kind == "deadlock" and v.state == 1


def test_bad_target_and_range():
    m = Mdp.from_transitions(1, {(0, "a"): {3: 1.0}, (0, "b"): {0: 1.5}})
    kinds = sorted(v.kind for v in validate(m))
    assert "bad-target" in kinds and "probability-range" in kinds


def test_distribution_merges_duplicates_and_drops_zeros():
    d = Distribution.of([(2, 0.25), (1, 0.5), (2, 0.25), (0, 0.0)])
    assert d.entries == ((1, 0.5), (2, 0.5))
    assert d.total == 1.0


def test_reachable_skips_disconnected_state():
    m = Mdp.from_transitions(
        4, {(0, "a"): {1: 1.0}, (1, "a"): {2: 1.0}, (2, "a"): {2: 1.0}, (3, "a"): {0: 1.0}}
    )
    assert reachable(m) == {0, 1, 2}
    assert reachable(Mdp.from_transitions(1, {(0, "a"): {0: 1.0}})) == {0}


def test_identity_restriction_keeps_everything():
    m = chain3()
    r = restrict(m, SpecPredicate.everything())
    assert transition_set(r) == transition_set(m)
    assert reachable(r) == reachable(m)
    assert r.restricted


def test_forbidding_one_pair_removes_only_it():
    m = Mdp.from_transitions(2, {(0, "a"): {1: 1.0}, (0, "b"): {0: 1.0}, (1, "a"): {1: 1.0}})
    r = restrict(m, SpecPredicate.forbid([(0, "b")]))
    assert transition_set(r) == {(0, "a", ((1, 1.0),)), (1, "a", ((1, 1.0),))}


def test_deadlock_after_restriction():
    m = chain3()
    with pytest.raises(DeadlockAfterRestriction) as err:
        restrict(m, SpecPredicate.forbid([(1, "a")]))
    assert err.value.states == [1]


def test_stutter_mode_adds_self_loop():
    m = chain3()
    r = restrict(m, SpecPredicate.forbid([(1, "a")]), deadlock_mode="stutter")
    assert r.n_states == 2
    assert (1, STUTTER, ((1, 1.0),)) in transition_set(r)
    assert validate(r) == []
    assert r.origin_choice.tolist() == [0, -1]


def test_restriction_trims_and_renumbers():
    m = Mdp.from_transitions(
        3, {(0, "a"): {2: 1.0}, (0, "b"): {1: 1.0}, (1, "a"): {1: 1.0}, (2, "a"): {2: 1.0}},
        labels={"g": [2]},
    )
    r = restrict(m, SpecPredicate.forbid([(0, "b")]))
    assert r.n_states == 2
    assert r.origin_state.tolist() == [0, 2]
    assert r.labels["g"].tolist() == [False, True]
    # restricting a restriction maps back to the original model
    rr = restrict(r, SpecPredicate.everything())
    assert rr.origin_state.tolist() == [0, 2]


def test_conjunction_is_pointwise_and():
    m = Mdp.from_transitions(1, {(0, "a"): {0: 1.0}, (0, "b"): {0: 1.0}, (0, "c"): {0: 1.0}})
    p = SpecPredicate.forbid([(0, "a")])
    q = SpecPredicate.forbid([(0, "c")])
    assert (p & q).mask(m).tolist() == [False, True, False]
    assert conj([]).mask(m).all()


def test_mask_shape_checked():
    m = chain3()
    with pytest.raises(ValueError):
        SpecPredicate.from_mask(np.ones(7, dtype=bool)).mask(m)


def test_dump_is_canonical():
    m = Mdp.from_transitions(2, {(1, "b"): {1: 1.0}, (0, "a"): {1: 0.5, 0: 0.5}}, labels={"g": [1]})
    assert m.dump() == 'states 2 initial 0\nlabel "g" 1\n0 a 0:0.5 1:0.5\n1 b 1:1.0\n'


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.data())
def test_restrict_is_antitone(seed, data):
    rng = np.random.default_rng(seed)
    ch = random_choices(rng, 5, 3)
    m = to_mdp(ch, random_labels(rng, len(ch)))
    strong = np.array(data.draw(st.lists(st.booleans(), min_size=m.n_choices, max_size=m.n_choices)), dtype=bool)
    extra = np.array(data.draw(st.lists(st.booleans(), min_size=m.n_choices, max_size=m.n_choices)), dtype=bool)
    weak = strong | extra
    rs = restrict(m, strong, "stutter")
    rw = restrict(m, weak, "stutter")

    def original(r):
        return {t for t in transition_set(r) if t[1] != STUTTER}

    assert original(rs) <= original(rw)
    assert {int(r) for r in rs.origin_state} <= {int(r) for r in rw.origin_state}


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_restricted_models_validate(seed):
    rng = np.random.default_rng(seed)
    ch = random_choices(rng, 6, 3)
    m = to_mdp(ch, random_labels(rng, len(ch)))
    assert validate(m) == []
    mask = rng.random(m.n_choices) < 0.6
    r = restrict(m, mask, "stutter")
    assert validate(r) == []
    assert reachable(r) == set(range(r.n_states))
