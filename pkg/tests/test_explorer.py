import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexverif.config import ConfigError, dump_config, from_dict, load_config
from flexverif.explorer import (
    EvalRecord,
    PointEvaluationError,
    StudyConfig,
    evaluate_all,
    frontier_optimal,
    frontier_search,
    optimal_specs,
    parse_start,
    report,
    run_study,
)
from flexverif.fuzzy import Constant, LinearRamp, TNorm, VagueRequirement
from flexverif.lang import load_model
from flexverif.lattice import DesignDimension, SpecLattice
from flexverif.mdp import SpecPredicate, restrict
from flexverif.pctl import parse_query, solve_until

TOY = """mdp
module m
  x : [0..2] init 0;
  [safe] x=0 -> 0.5:(x'=1) + 0.5:(x'=2);
  [fast] x=0 -> 0.9:(x'=1) + 0.1:(x'=2);
  [] x>0 -> true;
endmodule
label "goal" = x=1;
"""


def no_fast(v):
    return SpecPredicate.from_function(lambda s, a: v >= 1 or a != "fast")


def toy_config(**kw):
    base = dict(
        model="toy.mdp",
        query='Pmax=? [ true U "goal" ]',
        rho=0.9,
        dimensions=(
            DesignDimension("t", "horizon", (1, 2)),
            DesignDimension("v", "action_guard", (0, 1), no_fast, feature=(1, 5)),
        ),
        requirements=(
            VagueRequirement("time", LinearRamp(1, 3), "t"),
            VagueRequirement("risk", LinearRamp(1, 5), "v"),
        ),
    )
    base.update(kw)
    return StudyConfig(**base)


@pytest.fixture()
def toy():
    return load_model(TOY)


def synthetic_records(p, mu):
    out = []
    for i, j in np.ndindex(p.shape):
        out.append(EvalRecord((i, j), float(p[i, j]), None, (float(mu[i, j]),), float(mu[i, j]), p[i, j] >= 0.9))
    return out


P22 = np.array([[0.2, 0.95], [0.9, 1.0]])
MU22 = np.array([[0.9, 0.5], [0.6, 0.1]])


def test_synthetic_two_by_two():
    res = optimal_specs(synthetic_records(P22, MU22), 0.9)
    assert set(res.w) == {(0, 1), (1, 0), (1, 1)}
    assert res.argmax == ((1, 0),)
    assert res.mu_star == 0.6
    assert set(res.frontier) == {(0, 1), (1, 0)}
    fr = frontier_optimal((2, 2), lambda f: P22[f], lambda f: MU22[f], 0.9)
    assert (fr.w, fr.argmax, fr.mu_star) == (res.w, res.argmax, res.mu_star)


def test_threshold_extremes():
    recs = synthetic_records(P22, MU22)
    everything = optimal_specs(recs, 0.0)
    assert len(everything.w) == 4 and everything.argmax == ((0, 0),)
    empty = optimal_specs(recs, 1.0 + 0.0)
    assert empty.w == ((1, 1),)
    none = optimal_specs(synthetic_records(P22 * 0.5, MU22), 1.0)
    assert none.empty and none.mu_star is None and none.argmax == ()


def test_only_weakest_in_w():
    p = np.zeros((3, 4))
    p[-1, -1] = 1.0
    fr = frontier_optimal(p.shape, lambda f: p[f], lambda f: 0.3, 0.9)
    assert fr.w == ((2, 3),) and fr.argmax == ((2, 3),)
    assert fr.checks <= p.size


def test_csv_golden():
    recs = synthetic_records(P22, MU22)
    text = report(recs, optimal_specs(recs, 0.9), "csv")
    assert text == (
        "point,p_upper,p_lower,mu_1,mu,in_w,is_argmax\n"
        "f_0_0,0.2,,0.9,0.9,false,false\n"
        "f_0_1,0.95,,0.5,0.5,true,false\n"
        "f_1_0,0.9,,0.6,0.6,true,true\n"
        "f_1_1,1.0,,0.1,0.1,true,false\n"
    )


def test_dot_marks_w_and_argmax():
    lat = SpecLattice(tuple(DesignDimension(n, "horizon", (1, 2)) for n in ("a",)) +
                      (DesignDimension("b", "action_guard", (1, 2), lambda v: SpecPredicate.everything()),))
    recs = synthetic_records(P22, MU22)
    dot = report(recs, optimal_specs(recs, 0.9), "dot", lat)
    assert 'f_1_0 [label="f_{2,1}: 0.9000", color=blue, fontcolor=blue];' in dot
    assert 'f_0_1 [label="f_{1,2}: 0.9500", color=red, fontcolor=red];' in dot
    assert 'f_0_0 [label="f_{1,1}: 0.2000"];' in dot
    empty = report(recs, optimal_specs(recs, 1.5), "dot", lat)
    assert "color=" not in empty


def test_toy_records_match_direct_checks(toy):
    cfg = toy_config()
    recs = evaluate_all(cfg, toy)
    assert [r.point for r in recs] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    phi = parse_query(cfg.query)
    for r in recs:
        pred = no_fast(cfg.dimensions[1].values[r.point[1]])
        bound = cfg.dimensions[0].values[r.point[0]]
        sub = restrict(toy, pred)
        assert r.p_upper == solve_until(sub, phi.with_bound(bound))[sub.initial]
    assert [r.p_upper for r in recs] == [0.5, 0.9, 0.5, 0.9]
    assert [r.mu for r in recs] == [1.0, 0.0, 0.5, 0.0]
    res = optimal_specs(recs, cfg.rho)
    assert res.w == ((0, 1), (1, 1)) and res.mu_star == 0.0


def test_one_point_lattice(toy):
    cfg = toy_config(
        dimensions=(DesignDimension("v", "action_guard", (1,), no_fast),),
        requirements=(VagueRequirement("c", Constant(1.0), "v"),),
        query='Pmax=? [ true U "goal" ]',
    )
    (r,) = evaluate_all(cfg, toy)
    assert r.p_upper == pytest.approx(solve_until(toy, parse_query(cfg.query))[toy.initial], abs=1e-9)
    assert r.mu == 1.0


def test_lower_probability_and_start_label(toy):
    recs = evaluate_all(toy_config(compute_lower=True), toy)
    assert [r.p_lower for r in recs] == [0.5, 0.5, 0.5, 0.5]
    recs = evaluate_all(toy_config(start="min-label:goal"), toy)
    assert all(r.p_upper == 1.0 for r in recs)
    assert parse_start("initial") is None
    assert parse_start('min_over_label("goal")') == "goal"
    with pytest.raises(ValueError):
        parse_start("random")


def test_errors_tagged_with_point(toy):
    def forbid_all(v):
        return SpecPredicate.from_function(lambda s, a: v >= 1)

    cfg = toy_config(dimensions=(DesignDimension("v", "action_guard", (0, 1), forbid_all),),
                     requirements=(VagueRequirement("c", Constant(1.0), "v"),))
    with pytest.raises(PointEvaluationError) as err:
        evaluate_all(cfg, toy)
    assert err.value.point == (0,)
    assert "f_{0}" in str(err.value)


def test_workers_do_not_change_results(toy):
    a = evaluate_all(toy_config(), toy, workers=1)
    b = evaluate_all(toy_config(), toy, workers=4)
    assert a == b


def test_frontier_on_toy(toy):
    res = frontier_search(toy_config(), toy)
    ex = optimal_specs(evaluate_all(toy_config(), toy), 0.9)
    assert (res.w, res.argmax, res.mu_star) == (ex.w, ex.argmax, ex.mu_star)
    records, via_mode = run_study(toy_config(mode="frontier"), toy)
    assert records is None and via_mode.w == ex.w


def test_config_validation():
    with pytest.raises(ValueError):
        toy_config(rho=1.5)
    with pytest.raises(KeyError):
        toy_config(requirements=(VagueRequirement("x", Constant(1.0), "nope"),))
    with pytest.raises(ValueError):
        toy_config(mode="sideways")
    with pytest.raises(ValueError):
        toy_config(requirements=(VagueRequirement("x", Constant(0.2), "v"),))


def test_config_round_trip(tmp_path, homecare_study):
    text = dump_config(homecare_study)
    path = tmp_path / "study.toml"
    path.write_text(text)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = load_config(path)
    assert dump_config(cfg) == text
    assert cfg.lattice.shape == (10, 6, 9)
    assert cfg.horizon_scale == 2
    assert [r.fn for r in cfg.requirements] == [r.fn for r in homecare_study.requirements]


def test_config_file_with_model_path(tmp_path):
    (tmp_path / "toy.mdp").write_text(TOY)
    (tmp_path / "toy.toml").write_text(
        """model = "toy.mdp"
query = 'Pmax=? [ true U "goal" ]'
rho = 0.9
tnorm = "product"

[[dimension]]
name = "t"
kind = "horizon"
values = [1, 2]

[[requirement]]
name = "time"
dimension = "t"
shape = "piecewise_linear"
points = [[1, 1.0], [2, 0.25]]
"""
    )
    cfg = load_config(tmp_path / "toy.toml")
    assert cfg.tnorm == TNorm("product")
    recs = evaluate_all(cfg)
    assert [r.p_upper for r in recs] == [0.9, 0.9]
    assert [r.mu for r in recs] == [1.0, 0.25]


def test_config_errors():
    with pytest.raises(ConfigError):
        from_dict({"model": "x", "colour": "blue"})
    with pytest.raises(ConfigError):
        from_dict({"dimension": [{"name": "t", "kind": "horizon", "values": [1]}],
                   "requirement": [{"name": "r", "dimension": "t", "shape": "sigmoid", "center": 1}]})
    with pytest.raises(ConfigError):
        from_dict({"dimension": [{"name": "t", "kind": "horizon", "values": [1]}],
                   "requirement": [{"name": "r", "dimension": "t", "preset": "warp"}]})


@st.composite
def monotone_tables(draw):
    shape = tuple(draw(st.lists(st.integers(1, 5), min_size=1, max_size=3)))
    raw = np.array(draw(st.lists(st.floats(0, 1), min_size=int(np.prod(shape)), max_size=int(np.prod(shape))))).reshape(shape)
    p = raw.copy()
    for ax in range(len(shape)):
        p = np.maximum.accumulate(p, axis=ax)  # nondecreasing towards weaker points
    mu_raw = np.array(draw(st.lists(st.floats(0, 1), min_size=p.size, max_size=p.size))).reshape(shape)
    mu = mu_raw.copy()
    for ax in range(len(shape)):
        mu = np.minimum.accumulate(mu, axis=ax)  # nonincreasing towards weaker points
    rho = draw(st.sampled_from([0.0, 0.3, 0.5, 0.9, 1.0]))
    return p, mu, rho


@settings(max_examples=300, deadline=None)
@given(monotone_tables())
def test_frontier_equals_exhaustive_on_monotone_tables(table):
    p, mu, rho = table
    recs = [EvalRecord(f, float(p[f]), None, (float(mu[f]),), float(mu[f]), p[f] >= rho) for f in np.ndindex(p.shape)]
    ex = optimal_specs(recs, rho)
    fr = frontier_optimal(p.shape, lambda f: p[f], lambda f: mu[f], rho)
    assert (fr.w, fr.argmax, fr.mu_star, fr.frontier) == (ex.w, ex.argmax, ex.mu_star, ex.frontier)
    assert fr.checks <= p.size
