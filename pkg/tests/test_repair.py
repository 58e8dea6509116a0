import random

import pytest

from flowsmith import corpus as cp
from flowsmith import workflow as wf
from flowsmith.agents import build_agents
from flowsmith.errors import (
    BudgetExhausted,
    NoEligibleAgent,
    NotAFailure,
    StalledRepair,
)
from flowsmith.goals import Goal
from flowsmith.orchestrator import SolveConfig, Verdict, solve, verify
from flowsmith.repair import (
    MISSING_BRANCH,
    MISSING_STEP,
    OVER_ABSTRACTION,
    WRONG_ORDER,
    apply,
    diagnose,
    repair_loop,
)

from .conftest import (
    chain_flow,
    chain_pool,
    enumerate_single_edits,
    mk_flow,
)


def _delete_task(flow: wf.Workflow, pos: int) -> wf.Workflow:
    kids = list(wf.child_list(wf.normalize_node(flow.root)))
    del kids[pos]
    return mk_flow(kids, ins=flow.declared_inputs, outs=flow.declared_outputs,
                   gid=flow.goal_id)


def _swap_adjacent(flow: wf.Workflow, pos: int) -> wf.Workflow:
    kids = list(wf.child_list(wf.normalize_node(flow.root)))
    kids[pos], kids[pos + 1] = kids[pos + 1], kids[pos]
    return mk_flow(kids, ins=flow.declared_inputs, outs=flow.declared_outputs,
                   gid=flow.goal_id)


def _flow_goal(flow: wf.Workflow, gid: str) -> Goal:
    return Goal(id=gid, tokens=frozenset({gid}),
                input_schema=flow.declared_inputs,
                output_schema=flow.declared_outputs)


# --- diagnose ----------------------------------------------------------------------


def test_diagnose_rejects_passing_verdict():
    flow = chain_flow([0])
    with pytest.raises(NotAFailure):
        diagnose(verify(flow, flow, mode="oracle"), flow, flow)


def test_diagnose_deleted_task_maps_to_missing_step_at_path():
    expected = chain_flow([0, 1, 2])
    faulty = _delete_task(expected, 1)
    verdict = verify(faulty, expected, mode="oracle")
    hyps = diagnose(verdict, faulty, expected)
    assert len(hyps) == 1
    assert hyps[0].kind == MISSING_STEP
    assert hyps[0].location == (1,)
    assert hyps[0].needed == frozenset({"o1"})


def test_diagnose_transposition_maps_to_wrong_order():
    expected = chain_flow([0, 1, 2])
    faulty = _swap_adjacent(expected, 0)
    verdict = verify(faulty, expected, mode="oracle")
    hyps = diagnose(verdict, faulty, expected)
    assert [h.kind for h in hyps] == [WRONG_ORDER]


def test_diagnose_missing_branch_subtree():
    host = chain_flow([0, 1])
    alt = chain_flow([5])
    expected = wf.branch(host, wf.Predicate(sorted(alt.declared_outputs)[0], "exists"), alt)
    verdict = verify(host.replace(declared_inputs=expected.declared_inputs),
                     expected, mode="oracle")
    hyps = diagnose(verdict, host, expected)
    assert [h.kind for h in hyps] == [MISSING_BRANCH]
    assert hyps[0].needed == alt.declared_outputs


def test_diagnose_root_nest_maps_to_over_abstraction():
    flat = chain_flow([0, 1], gid="gnest")
    expected = wf.nest(flat, (), "gnest", flat)
    verdict = verify(flat, expected, mode="oracle")
    hyps = diagnose(verdict, flat, expected)
    assert [h.kind for h in hyps] == [OVER_ABSTRACTION]
    assert hyps[0].location == ()
    assert hyps[0].needed.id == "gnest"


def test_diagnose_goal_anchored_missing_outputs():
    candidate = chain_flow([0])
    target = Goal(id="g", tokens=frozenset({"g"}),
                  input_schema=candidate.declared_inputs,
                  output_schema=frozenset({"o0", "report"}))
    verdict = verify(candidate, target, mode="goal_anchored")
    hyps = diagnose(verdict, candidate, target)
    assert [h.kind for h in hyps] == [MISSING_STEP]
    assert hyps[0].needed == frozenset({"report"})


# --- apply -------------------------------------------------------------------------


def test_apply_insert_with_unique_exact_match_restores_equality():
    net = chain_pool(6)
    expected = chain_flow([0, 1, 2])
    faulty = _delete_task(expected, 1)
    verdict = verify(faulty, expected, mode="oracle")
    hypothesis = diagnose(verdict, faulty, expected)[0]
    repaired, action = apply(faulty, hypothesis, net, rng=random.Random(0))
    assert action.op == "Insert" and action.agent_id == "g1"
    assert wf.structurally_equal(repaired, expected)


def test_apply_reorder_restores_equality():
    net = chain_pool(6)
    expected = chain_flow([0, 1, 2])
    faulty = _swap_adjacent(expected, 1)
    verdict = verify(faulty, expected, mode="oracle")
    hypothesis = diagnose(verdict, faulty, expected)[0]
    repaired, action = apply(faulty, hypothesis, net, rng=random.Random(0))
    assert action.op == "Reorder"
    assert wf.structurally_equal(repaired, expected)


def test_apply_missing_step_on_empty_network_raises():
    net = build_agents([])
    expected = chain_flow([0, 1])
    faulty = _delete_task(expected, 0)
    verdict = verify(faulty, expected, mode="oracle")
    hypothesis = diagnose(verdict, faulty, expected)[0]
    with pytest.raises(NoEligibleAgent):
        apply(faulty, hypothesis, net, rng=random.Random(0))


def test_apply_branch_rebuilds_generated_branch_exactly():
    net = chain_pool(8)
    host = chain_flow([0, 1])
    alt = net.agent_by_id("g2").procedure  # consumes o1, produced by the host
    cond = wf.Predicate(sorted(alt.declared_outputs)[0], "exists")
    expected = wf.branch(host, cond, alt)
    assert wf.validate(expected).ok
    candidate = host.replace(declared_inputs=expected.declared_inputs)
    verdict = verify(candidate, expected, mode="oracle")
    hypothesis = diagnose(verdict, candidate, expected)[0]
    repaired, action = apply(candidate, hypothesis, net, rng=random.Random(0))
    assert action.op == "Branch"
    assert wf.structurally_equal(repaired, expected)


def test_apply_nest_rebuilds_via_decomposition():
    net = chain_pool(6)
    records = [cp.CorpusRecord(g, w, "linear", "1") for g, w in net.training]
    novel = cp.make_novel_goals(records, seed=21, count=1, parts_range=(2, 2),
                                structure="nested")[0]
    config = SolveConfig(seed=4, repair_budget=5)
    episode = solve(net, novel.goal, config, expected=novel.workflow)
    assert episode.passed_rank() == 1
    ops = [r.action for r in episode.repairs_applied]
    assert ops and ops[0] == "Nest"


# --- repair_loop -------------------------------------------------------------------


def test_repair_loop_budget_must_be_positive():
    net = chain_pool(2)
    flow = chain_flow([0])
    with pytest.raises(ValueError):
        repair_loop(net, _flow_goal(flow, "g"), flow, flow, budget=0)


def test_repair_loop_one_insert_away_budget_one():
    net = chain_pool(6)
    expected = chain_flow([0, 1, 2], gid="case")
    faulty = _delete_task(expected, 2)
    goal = _flow_goal(expected, "case")
    repaired, verdict, trace = repair_loop(net, goal, faulty, expected, budget=1,
                                           rng=random.Random(0))
    assert verdict.passed
    assert len(trace) == 1
    assert wf.structurally_equal(repaired, expected)


def test_repair_loop_two_independent_missing_steps_budget_two():
    net = chain_pool(8)
    expected = chain_flow([0, 2, 4, 6], gid="dual")  # chain inputs come from declared
    faulty = _delete_task(_delete_task(expected, 3), 1)
    goal = _flow_goal(expected, "dual")
    repaired, verdict, trace = repair_loop(net, goal, faulty, expected, budget=2,
                                           rng=random.Random(0))
    assert verdict.passed
    assert len(trace) == 2
    assert all(r.action == "Insert" for r in trace)
    assert wf.structurally_equal(repaired, expected)


def test_repair_loop_budget_exhausted_raises_with_trace():
    net = chain_pool(8)
    expected = chain_flow([0, 2, 4, 6], gid="tight")
    faulty = _delete_task(_delete_task(expected, 3), 1)
    goal = _flow_goal(expected, "tight")
    with pytest.raises(BudgetExhausted) as err:
        repair_loop(net, goal, faulty, expected, budget=1, rng=random.Random(0))
    assert len(err.value.trace) == 1


def test_repair_loop_stalls_without_actionable_hypothesis():
    net = chain_pool(4)
    expected = chain_flow([0, 1], gid="stall")
    kids = list(wf.child_list(wf.normalize_node(expected.root)))
    extra = net.agent_by_id("g3").procedure.root
    faulty = mk_flow(kids + [extra], ins=expected.declared_inputs,
                     outs=expected.declared_outputs)
    goal = _flow_goal(expected, "stall")
    # the only fix is a deletion, which the hypothesis space cannot express
    with pytest.raises(StalledRepair):
        repair_loop(net, goal, faulty, expected, budget=3, rng=random.Random(0))


def test_repair_loop_progress_is_strict_along_trace():
    net = chain_pool(10)
    expected = chain_flow([0, 2, 4, 6, 8], gid="prog")
    faulty = _delete_task(_delete_task(_delete_task(expected, 4), 2), 0)
    goal = _flow_goal(expected, "prog")
    repaired, verdict, trace = repair_loop(net, goal, faulty, expected, budget=3,
                                           rng=random.Random(0))
    assert verdict.passed
    distances = [len(wf.diff(faulty, expected))]
    for record in trace:
        distances.append(len(wf.diff(record.candidate, expected)))
    assert all(b < a for a, b in zip(distances, distances[1:]))
    assert all(wf.validate(r.candidate).ok for r in trace)


def test_repair_loop_completeness_cross_checked_with_enumeration():
    net = chain_pool(10)
    rng = random.Random(77)
    insertables = [agent.procedure.root for agent in net.active]
    for _ in range(100):
        size = rng.randint(2, 6)
        indices = rng.sample(range(10), size)
        expected = chain_flow(indices, gid="enum")
        if rng.random() < 0.5:
            faulty = _delete_task(expected, rng.randrange(size))
        else:
            faulty = _swap_adjacent(expected, rng.randrange(size - 1))
        if wf.structurally_equal(faulty, expected):
            continue
        # brute-force oracle: the fault must be one edit away
        variants = enumerate_single_edits(faulty, insertables)
        assert any(wf.structurally_equal(v, expected) for v in variants)
        goal = _flow_goal(expected, "enum")
        repaired, verdict, _ = repair_loop(net, goal, faulty, expected, budget=3,
                                           rng=random.Random(1))
        assert verdict.passed
        assert wf.structurally_equal(repaired, expected)
