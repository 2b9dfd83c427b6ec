import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskplan.frenet import PathProjectionError, ReferencePath
from riskplan.planner import (
    CandidateTrajectory,
    CostBreakdown,
    NoFeasibleTrajectory,
    PlannerConfig,
    PlannerError,
    QuinticPolynomial,
    cost_J,
    cost_J_mean,
    cost_origin,
    cost_total,
    cost_utility,
    feasibility_check,
    sample_candidates,
    score_candidates,
    select_trajectory,
)
from riskplan.risk import RiskProfile
from riskplan.scenario import AgentState

DT = 0.25


@pytest.fixture
def straight_path():
    return ReferencePath([(-20.0, 0.0), (200.0, 0.0)])


def make_profile(ego_risks, imposed_risks, candidate_id=0):
    return RiskProfile(
        candidate_id=candidate_id,
        agent_ids=[f"a{i}" for i in range(len(ego_risks))],
        agent_classes=["car"] * len(ego_risks),
        ego_risks=list(ego_risks),
        imposed_risks=list(imposed_risks),
        attribution={"ego_av": sum(ego_risks),
                     "third_party": sum(imposed_risks), "vru": 0.0},
    )


# --- sampling ---------------------------------------------------------------

def test_candidate_count_is_cartesian_product(straight_path):
    cfg = PlannerConfig(lateral_offsets=(-3, -1.5, 0, 1.5, 3),
                        speed_factors=(0.8, 1.0, 1.2), horizons=(2.0, 3.0))
    ego = AgentState(0.0, 0.0, 8.0, 0.0)
    candidates = sample_candidates(ego, straight_path, cfg, DT)
    assert len(candidates) == 5 * 3 * 2
    assert [c.id for c in candidates] == list(range(30))


def test_zero_boundary_candidate_tracks_reference(straight_path):
    cfg = PlannerConfig(lateral_offsets=(0.0,), terminal_speeds=(8.0,),
                        horizons=(2.0,))
    ego = AgentState(0.0, 0.0, 8.0, 0.0)
    (cand,) = sample_candidates(ego, straight_path, cfg, DT)
    assert len(cand) == 8
    assert np.allclose(cand.y, 0.0, atol=1e-12)
    assert np.allclose(cand.v, 8.0, atol=1e-12)
    assert np.allclose(cand.x, 8.0 * DT * np.arange(1, 9), atol=1e-9)


def test_quintic_symmetric_midpoint():
    # d(0)=1 with zero rates settling to d(T)=0: midpoint is the mean
    quintic = QuinticPolynomial(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0)
    assert quintic.value(1.0) == pytest.approx(0.5, abs=1e-12)


def test_candidate_matches_generating_polynomials(straight_path):
    cfg = PlannerConfig()
    ego = AgentState(0.0, 1.0, 8.0, 0.05)
    for cand in sample_candidates(ego, straight_path, cfg, DT)[:6]:
        t = DT * np.arange(1, len(cand) + 1)
        d = np.array([cand.lat_poly.value(tk) for tk in t])
        s = np.array([cand.lon_poly.value(tk) for tk in t])
        # straight path along +x starting at x=-20: x == s - 20, y == d
        assert np.allclose(cand.x, s - 20.0, atol=1e-9)
        assert np.allclose(cand.y, d, atol=1e-9)


def test_ego_off_path_end_errors(straight_path):
    cfg = PlannerConfig()
    with pytest.raises(PathProjectionError):
        sample_candidates(AgentState(300.0, 0.0, 5.0, 0.0), straight_path, cfg, DT)


# --- feasibility ------------------------------------------------------------

def test_feasible_straight_candidate(straight_path):
    cfg = PlannerConfig(lateral_offsets=(0.0,), terminal_speeds=(8.0,),
                        horizons=(2.0,))
    (cand,) = sample_candidates(AgentState(0, 0, 8.0, 0.0), straight_path, cfg, DT)
    assert feasibility_check(cand, cfg) == []


def test_overspeed_flagged(straight_path):
    cfg = PlannerConfig(lateral_offsets=(0.0,), terminal_speeds=(14.0,),
                        horizons=(2.0,), v_max=15.0)
    (cand,) = sample_candidates(AgentState(0, 0, 16.0, 0.0), straight_path, cfg, DT)
    assert "speed" in feasibility_check(cand, cfg)


def test_hard_accel_flagged(straight_path):
    cfg = PlannerConfig(lateral_offsets=(0.0,), terminal_speeds=(14.0,),
                        horizons=(2.0,), a_max=2.0)
    (cand,) = sample_candidates(AgentState(0, 0, 2.0, 0.0), straight_path, cfg, DT)
    assert "accel" in feasibility_check(cand, cfg)


def test_lanelet_bounds_flagged(straight_path):
    cfg = PlannerConfig(lateral_offsets=(3.0,), terminal_speeds=(8.0,),
                        horizons=(3.0,))
    (cand,) = sample_candidates(AgentState(0, 0, 8.0, 0.0), straight_path, cfg, DT)
    narrow = [[(-20.0, 1.5), (200.0, 1.5), (200.0, -1.5), (-20.0, -1.5)]]
    assert feasibility_check(cand, cfg, narrow) == ["bounds"]
    wide = [[(-20.0, 5.0), (200.0, 5.0), (200.0, -5.0), (-20.0, -5.0)]]
    assert feasibility_check(cand, cfg, wide) == []


# --- costs ------------------------------------------------------------------

def test_cost_origin_time_term_only(straight_path):
    cfg = PlannerConfig(lateral_offsets=(0.0,), terminal_speeds=(8.0,),
                        horizons=(2.0,), w_time=1.7)
    (cand,) = sample_candidates(AgentState(0, 0, 8.0, 0.0), straight_path, cfg, DT)
    assert cost_origin(cand, cfg, DT, v_target=8.0) == pytest.approx(1.7 * 2.0,
                                                                     abs=1e-12)


def test_cost_origin_time_weight_linearity(straight_path):
    cfg1 = PlannerConfig(lateral_offsets=(0.0,), terminal_speeds=(8.0,),
                         horizons=(2.0,), w_time=1.0)
    cfg2 = PlannerConfig(lateral_offsets=(0.0,), terminal_speeds=(8.0,),
                         horizons=(2.0,), w_time=2.0)
    (cand,) = sample_candidates(AgentState(0, 0, 8.0, 0.0), straight_path, cfg1, DT)
    j1 = cost_origin(cand, cfg1, DT, 8.0)
    j2 = cost_origin(cand, cfg2, DT, 8.0)
    assert j2 == pytest.approx(2.0 * j1, abs=1e-12)


def test_cost_origin_lateral_offset_term(straight_path):
    cfg = PlannerConfig(lateral_offsets=(0.0, 1.0), terminal_speeds=(8.0,),
                        horizons=(2.0,), w_lat=0.7)
    c0, c1 = sample_candidates(AgentState(0, 0, 8.0, 0.0), straight_path, cfg, DT)
    j0 = cost_origin(c0, cfg, DT, 8.0)
    j1 = cost_origin(c1, cfg, DT, 8.0)
    jerk_delta = cfg.w_jerk * (float(np.sum(c1.jerk ** 2)) -
                               float(np.sum(c0.jerk ** 2))) * DT
    assert (j1 - j0) - jerk_delta == pytest.approx(0.7 * 1.0 ** 2, abs=1e-9)


def test_cost_J_examples():
    assert cost_J(make_profile([], [])) == 0.0
    assert cost_J(make_profile([0.2, 0.4], [0.3])) == pytest.approx(0.9)


def test_cost_J_mean_paper_literal():
    profile = make_profile([0.2, 0.4], [0.3])
    assert cost_J_mean(profile=profile) == pytest.approx(0.45)
    single = make_profile([0.25], [0.15])
    assert cost_J_mean(profile=single) == pytest.approx(cost_J(single))
    empty = make_profile([], [])
    assert cost_J_mean(profile=empty) == 0.0


def test_cost_J_mean_cohort():
    assert cost_J_mean(cohort=[0.2, 0.4, 0.6], mode="cohort-mean") == pytest.approx(0.4)
    with pytest.raises(PlannerError):
        cost_J_mean(cohort=[], mode="cohort-mean")


def test_cost_utility_branches():
    assert cost_utility(0.3, 0.45) == 0.0
    assert cost_utility(0.45, 0.45) == 0.0
    assert cost_utility(0.9, 0.45) == 0.9
    assert cost_utility(0.9, 0.45, rule="prose") == 0.45


def test_cost_total_examples():
    cfg = PlannerConfig(omega_o=1.0, omega_u=0.0)
    assert cost_total(2.0, 0.9, cfg) == 2.0
    cfg = PlannerConfig(omega_o=0.5, omega_u=0.5)
    assert cost_total(2.0, 0.9, cfg) == pytest.approx(1.45)
    cfg = PlannerConfig(omega_o=0.0, omega_u=1.0)
    assert cost_total(2.0, 0.9, cfg) == 0.9


def test_paper_literal_degeneracy():
    # two or more partners with positive risk: J always exceeds J/N
    profile = make_profile([0.1, 0.2], [0.05, 0.3])
    j = cost_J(profile)
    j_mean = cost_J_mean(profile=profile)
    assert j > j_mean
    assert cost_utility(j, j_mean) == j


# --- selection --------------------------------------------------------------

def dummy_candidate(cand_id, feasible=True):
    n = 4
    return CandidateTrajectory(
        id=cand_id, d_target=0.0, v_target=8.0, horizon=1.0,
        x=np.zeros(n), y=np.zeros(n), heading=np.zeros(n),
        v=np.full(n, 8.0), a=np.zeros(n), jerk=np.zeros(n),
        curvature=np.zeros(n), feasible=feasible,
    )


def breakdown(j_risk, j_origin=1.0):
    return CostBreakdown(j_origin=j_origin, j=0.0, j_mean=0.0, j_utility=0.0,
                         j_risk=j_risk, omega_o=1.0, omega_u=1.0)


def test_select_singleton():
    cand = dummy_candidate(0)
    chosen, ranking = select_trajectory([(cand, breakdown(1.0))])
    assert chosen is cand
    assert len(ranking) == 1


def test_select_argmin():
    scored = [(dummy_candidate(i), breakdown(v))
              for i, v in enumerate([1.0, 0.4, 0.7])]
    chosen, _ = select_trajectory(scored)
    assert chosen.id == 1


def test_select_tie_breaks_on_origin_then_id():
    scored = [(dummy_candidate(0), breakdown(0.5, j_origin=2.0)),
              (dummy_candidate(1), breakdown(0.5, j_origin=1.5))]
    chosen, _ = select_trajectory(scored)
    assert chosen.id == 1
    scored = [(dummy_candidate(0), breakdown(0.5, 1.5)),
              (dummy_candidate(1), breakdown(0.5, 1.5))]
    chosen, _ = select_trajectory(scored)
    assert chosen.id == 0


def test_select_excludes_infeasible():
    scored = [(dummy_candidate(0, feasible=False), breakdown(0.1)),
              (dummy_candidate(1), breakdown(0.9))]
    chosen, ranking = select_trajectory(scored)
    assert chosen.id == 1
    assert all(c.feasible for c, _ in ranking)


def test_select_no_feasible_raises():
    with pytest.raises(NoFeasibleTrajectory):
        select_trajectory([(dummy_candidate(0, feasible=False), breakdown(0.1))])


# --- oracle equivalence and properties --------------------------------------

def oracle_cost_stack(ego_risks, imposed_risks, j_origin, omega_o, omega_u,
                      j_mean_mode="paper-literal", cohort=None,
                      rule="equation"):
    """Straight-line recomputation of the four cost equations."""
    j = 0.0
    for r in ego_risks:
        j += r
    for r in imposed_risks:
        j += r
    if j_mean_mode == "paper-literal":
        j_mean = j / len(ego_risks) if ego_risks else 0.0
    else:
        j_mean = sum(cohort) / len(cohort)
    if j <= j_mean:
        j_utility = 0.0
    else:
        j_utility = j if rule == "equation" else j_mean
    return j, j_mean, j_utility, omega_o * j_origin + omega_u * j_utility


def test_cost_stack_matches_oracle_random():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(1, 6))
        ego_risks = rng.uniform(0, 1, n).tolist()
        imposed = rng.uniform(0, 1, n).tolist()
        profile = make_profile(ego_risks, imposed)
        j = cost_J(profile)
        j_mean = cost_J_mean(profile=profile)
        cfg = PlannerConfig(omega_o=float(rng.uniform(0, 2)),
                            omega_u=float(rng.uniform(0.01, 2)))
        j_u = cost_utility(j, j_mean, cfg.utility_rule)
        j_risk = cost_total(float(rng.uniform(0, 3)), j_u, cfg)
        oj, om, ou, orsk = oracle_cost_stack(
            ego_risks, imposed, 0.0, cfg.omega_o, cfg.omega_u)
        assert j == pytest.approx(oj, rel=1e-12, abs=1e-15)
        assert j_mean == pytest.approx(om, rel=1e-12, abs=1e-15)
        assert j_u == pytest.approx(ou, rel=1e-12, abs=1e-15)


def test_breakdown_identity_and_scale_invariance(straight_path):
    rng = np.random.default_rng(3)
    cfg = PlannerConfig(j_mean_mode="cohort-mean")
    candidates = sample_candidates(AgentState(0, 0, 8.0, 0.0),
                                   straight_path, cfg, DT)
    profiles = {
        c.id: make_profile(rng.uniform(0, 0.5, 2).tolist(),
                           rng.uniform(0, 0.5, 2).tolist(), c.id)
        for c in candidates
    }
    scored = score_candidates(candidates, profiles, cfg, DT, v_target=8.0)
    for bd in scored.values():
        assert bd.j_risk == pytest.approx(
            bd.omega_o * bd.j_origin + bd.omega_u * bd.j_utility, abs=1e-12)
        assert bd.j_utility in (0.0, bd.j)

    chosen, _ = select_trajectory([(c, scored[c.id]) for c in candidates])
    cfg_scaled = PlannerConfig(j_mean_mode="cohort-mean", omega_o=3.0, omega_u=3.0)
    scored_scaled = score_candidates(candidates, profiles, cfg_scaled, DT, 8.0)
    chosen_scaled, _ = select_trajectory(
        [(c, scored_scaled[c.id]) for c in candidates])
    assert chosen_scaled.id == chosen.id


def test_omega_u_zero_reduces_to_comfort_argmin(straight_path):
    rng = np.random.default_rng(11)
    cfg = PlannerConfig(omega_u=0.0, j_mean_mode="cohort-mean")
    candidates = sample_candidates(AgentState(0, 0.4, 8.0, 0.0),
                                   straight_path, cfg, DT)
    profiles = {
        c.id: make_profile(rng.uniform(0, 1, 2).tolist(),
                           rng.uniform(0, 1, 2).tolist(), c.id)
        for c in candidates
    }
    scored = score_candidates(candidates, profiles, cfg, DT, v_target=8.0)
    chosen, _ = select_trajectory([(c, scored[c.id]) for c in candidates])
    comfort_best = min(candidates,
                       key=lambda c: (cost_origin(c, cfg, DT, 8.0), c.id))
    assert chosen.id == comfort_best.id


@given(st.integers(min_value=0, max_value=2 ** 32 - 1))
@settings(max_examples=40, deadline=None)
def test_selection_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    j_risks = np.round(rng.uniform(0, 2, n), 2)  # rounding forces ties
    j_origins = np.round(rng.uniform(0, 2, n), 2)
    scored = [(dummy_candidate(i), breakdown(float(j_risks[i]), float(j_origins[i])))
              for i in range(n)]
    chosen, _ = select_trajectory(scored)
    best = min(range(n), key=lambda i: (j_risks[i], j_origins[i], i))
    assert chosen.id == best
