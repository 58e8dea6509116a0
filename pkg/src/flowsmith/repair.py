"""Feedback-driven structural repair of failed candidate workflows.

A failed verdict is mapped to ordered failure hypotheses; each
hypothesis names one structural operator: a missing step inserts an
agent's procedure, a missing branch attaches a guarded side path, an
over-abstraction re-decomposes a goal under a Nest boundary, and a
wrong order permutes siblings.  The loop applies the first applicable
hypothesis, re-verifies, and insists on strict progress (shrinking
oracle edit script, or shrinking missing-output set) until it passes
or the budget runs out.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import workflow as wf
from .agents import AgentNetwork, AtomicAgent, select
from .errors import (
    BudgetExhausted,
    NoEligibleAgent,
    NotAFailure,
    RejectedRepair,
    StalledRepair,
)
from .goals import Goal, similarity
from .orchestrator import RepairRecord, Verdict, compose, decompose, verify

MISSING_STEP = "MissingStep"
WRONG_ORDER = "WrongOrder"
MISSING_BRANCH = "MissingBranch"
OVER_ABSTRACTION = "OverAbstraction"

_KIND_ORDER = {MISSING_STEP: 0, WRONG_ORDER: 1, MISSING_BRANCH: 2, OVER_ABSTRACTION: 3}


@dataclass(frozen=True)
class FailureHypothesis:
    kind: str
    location: wf.Path
    needed: "Goal | frozenset[str] | None" = None
    evidence: "wf.Edit | str | None" = None


@dataclass(frozen=True)
class RepairAction:
    op: str  # Insert | Branch | Nest | Reorder
    location: wf.Path
    agent_id: str | None = None
    predicate: wf.Predicate | None = None
    permutation: tuple[int, ...] | None = None
    sub_goal: str | None = None


def _subtree_outputs(node: wf.WorkflowNode) -> frozenset[str]:
    fields: set[str] = set()
    for task in wf.task_order(node):
        fields |= set(task.output_schema)
    return frozenset(fields)


def _crosses_branch(root: wf.WorkflowNode, path: wf.Path) -> bool:
    node: wf.WorkflowNode = wf.Sequence(wf.child_list(root))
    for step in path[:-1]:
        if isinstance(node, wf.Branch):
            return True
        kids = wf.children_of(node)
        if not 0 <= step < len(kids):
            return False
        node = kids[step]
    return isinstance(node, wf.Branch)


def _goal_ref(sub_goal_id: str) -> Goal:
    return Goal(id=sub_goal_id, tokens=frozenset({sub_goal_id}))


def diagnose(verdict: Verdict, candidate: wf.Workflow, target) -> list[FailureHypothesis]:
    """Turn a failing verdict into ordered, actionable structural hypotheses.

    Oracle mode maps the edit script edit by edit (inserted Nest content
    reads as over-abstraction, insertions under or of a Branch as a
    missing branch, other insertions as missing steps, reorders as wrong
    order).  Extra-node edits have no counterpart in the hypothesis
    space and are skipped.  Goal-anchored mode emits one missing step
    per missing output field at the insertion frontier.
    """
    if verdict.passed:
        raise NotAFailure("diagnosis requires a failing verdict")

    hypotheses: list[FailureHypothesis] = []
    if verdict.mode == "oracle":
        cand_root = wf.normalize_node(candidate.root)
        expected_root = wf.normalize_node(target.root)
        if isinstance(expected_root, wf.Nest) and not isinstance(cand_root, wf.Nest):
            # The whole flow should live under a sub-workflow boundary.
            return [FailureHypothesis(
                kind=OVER_ABSTRACTION, location=(),
                needed=_goal_ref(expected_root.sub_goal_id),
                evidence="root nest missing",
            )]
        for edit in verdict.edit_script:
            if isinstance(edit, wf.ReorderChildren):
                hypotheses.append(FailureHypothesis(
                    kind=WRONG_ORDER, location=edit.path, evidence=edit,
                ))
            elif isinstance(edit, (wf.InsertNode, wf.ReplaceSubtree)):
                node = edit.node
                if isinstance(node, wf.Nest):
                    hypotheses.append(FailureHypothesis(
                        kind=OVER_ABSTRACTION, location=edit.path,
                        needed=_goal_ref(node.sub_goal_id), evidence=edit,
                    ))
                elif isinstance(edit, wf.InsertNode) and (
                    isinstance(node, wf.Branch) or _crosses_branch(cand_root, edit.path)
                ):
                    hypotheses.append(FailureHypothesis(
                        kind=MISSING_BRANCH, location=edit.path,
                        needed=_subtree_outputs(node), evidence=edit,
                    ))
                elif isinstance(edit, wf.InsertNode):
                    hypotheses.append(FailureHypothesis(
                        kind=MISSING_STEP, location=edit.path,
                        needed=_subtree_outputs(node), evidence=edit,
                    ))
                # ReplaceSubtree of non-Nest content is not expressible as a
                # single repair operator; leave it to later iterations.
    else:
        frontier = (len(wf.child_list(wf.normalize_node(candidate.root))),)
        for name in sorted(verdict.missing_outputs):
            hypotheses.append(FailureHypothesis(
                kind=MISSING_STEP, location=frontier, needed=frozenset({name}),
                evidence=f"missing output {name!r}",
            ))
    hypotheses.sort(key=lambda h: (h.location, _KIND_ORDER[h.kind]))
    return hypotheses


def _match_agent(net: AgentNetwork, needed, rng: random.Random,
                 scale_control: bool = True) -> AtomicAgent:
    """The best-matching agent for a need: top score group, then selection.

    A Goal need scores by token similarity; a field-set need scores by
    output-schema coverage.  With a unique best match the choice is
    deterministic regardless of the draw.
    """
    scored: list[tuple[AtomicAgent, float]] = []
    for agent in sorted(net.active, key=lambda a: a.agent_id):
        if isinstance(needed, Goal):
            score = similarity(net.backend, agent.goal, needed)
        else:
            fields = frozenset(needed)
            score = len(agent.goal.output_schema & fields) / len(fields) if fields else 0.0
        if score > 0.0:
            scored.append((agent, score))
    if not scored:
        raise NoEligibleAgent(f"no agent matches needed {needed!r}")
    best = max(score for _, score in scored)
    top = [(agent, score) for agent, score in scored if score == best]
    return select(top, rng, use_life=scale_control)


def apply(candidate: wf.Workflow, hypothesis: FailureHypothesis, net: AgentNetwork, *,
          goal: Goal | None = None, theta: float = 0.8, rng: random.Random | None = None,
          max_depth: int = 8, scale_control: bool = True,
          input_gate: bool = True) -> tuple[wf.Workflow, RepairAction]:
    """Apply one hypothesis; the result must validate or the action is rejected."""
    rng = rng or random.Random(net.rng_seed)

    if hypothesis.kind == MISSING_STEP:
        agent = _match_agent(net, hypothesis.needed, rng, scale_control)
        edit = wf.InsertNode(hypothesis.location, agent.procedure.root)
        repaired = wf.apply_edits((edit,), candidate)
        repaired = repaired.replace(
            declared_outputs=repaired.declared_outputs | agent.goal.output_schema
        )
        action = RepairAction(op="Insert", location=hypothesis.location,
                              agent_id=agent.agent_id)
    elif hypothesis.kind == WRONG_ORDER:
        if not isinstance(hypothesis.evidence, wf.ReorderChildren):
            raise RejectedRepair("wrong-order hypothesis without a permutation")
        repaired = wf.apply_edits((hypothesis.evidence,), candidate)
        action = RepairAction(op="Reorder", location=hypothesis.location,
                              permutation=hypothesis.evidence.permutation)
    elif hypothesis.kind == MISSING_BRANCH:
        needed = hypothesis.needed if isinstance(hypothesis.needed, frozenset) else frozenset()
        if not needed:
            raise RejectedRepair("missing-branch hypothesis without needed fields")
        agent = _match_agent(net, needed, rng, scale_control)
        predicate = wf.Predicate(key=sorted(needed)[0], op="exists")
        node = wf.Branch(predicate, agent.procedure.root, None)
        repaired = wf.apply_edits((wf.InsertNode(hypothesis.location, node),), candidate)
        action = RepairAction(op="Branch", location=hypothesis.location,
                              agent_id=agent.agent_id, predicate=predicate)
    elif hypothesis.kind == OVER_ABSTRACTION:
        needed = hypothesis.needed
        if not isinstance(needed, Goal):
            raise RejectedRepair("over-abstraction hypothesis without a goal")
        resolved = None
        if goal is not None and goal.id == needed.id:
            resolved = goal
        else:
            for agent in sorted(net.active, key=lambda a: a.agent_id):
                if agent.goal.id == needed.id:
                    resolved = agent.goal
                    break
        if resolved is None:
            raise NoEligibleAgent(f"no known goal with id {needed.id!r}")
        tree = decompose(net, resolved, theta, max_depth, rng,
                         allow_split=True, scale_control=scale_control,
                         input_gate=input_gate)
        body = compose(tree, net)
        nest_node = wf.Nest(resolved.id, body.root)
        repaired = wf.apply_edits(
            (wf.ReplaceSubtree(hypothesis.location, nest_node),), candidate
        )
        repaired = repaired.replace(
            declared_outputs=repaired.declared_outputs | body.declared_outputs
        )
        action = RepairAction(op="Nest", location=hypothesis.location,
                              sub_goal=resolved.id)
    else:
        raise RejectedRepair(f"unknown hypothesis kind {hypothesis.kind!r}")

    report = wf.validate(repaired)
    if not report.ok:
        raise RejectedRepair(
            f"{action.op} at {list(hypothesis.location)} breaks dataflow: "
            + "; ".join(report.violations)
        )
    return repaired, action


def _progress_metric(verdict: Verdict) -> int:
    if verdict.mode == "oracle":
        return len(verdict.edit_script)
    return len(verdict.missing_outputs)


def repair_loop(net: AgentNetwork, goal: Goal, candidate: wf.Workflow, target,
                budget: int, *, mode: str = "oracle", eta: float = 0.95,
                theta: float = 0.8, rng: random.Random | None = None,
                max_depth: int = 8, scale_control: bool = True,
                input_gate: bool = True, output_goal: bool = True,
                raise_on_abort: bool = True
                ) -> tuple[wf.Workflow, Verdict, list[RepairRecord]]:
    """Diagnose / apply / verify until the candidate passes or budget is spent.

    Every iteration must strictly shrink the oracle edit script (or the
    missing-output set); otherwise the loop stops with StalledRepair.
    With ``raise_on_abort`` off the partial state is returned instead of
    raised, which is how the solve loop consumes it.
    """
    if budget < 1:
        raise ValueError("repair budget must be >= 1")
    rng = rng or random.Random(net.rng_seed)

    trace: list[RepairRecord] = []
    verdict = verify(candidate, target, mode, eta, output_goal=output_goal)
    last_metric = _progress_metric(verdict)

    def abort(exc_type, message):
        if raise_on_abort:
            raise exc_type(message, candidate=candidate, verdict=verdict, trace=trace)
        return candidate, verdict, trace

    if verdict.passed:
        return candidate, verdict, trace

    for _ in range(budget):
        try:
            hypotheses = diagnose(verdict, candidate, target)
        except NotAFailure:
            break
        applied = None
        for hypothesis in hypotheses:
            try:
                repaired, action = apply(
                    candidate, hypothesis, net, goal=goal, theta=theta, rng=rng,
                    max_depth=max_depth, scale_control=scale_control,
                    input_gate=input_gate,
                )
            except (NoEligibleAgent, RejectedRepair):
                continue
            applied = (hypothesis, action, repaired)
            break
        if applied is None:
            return abort(StalledRepair, f"no applicable hypothesis for goal {goal.id!r}")
        hypothesis, action, candidate = applied
        verdict = verify(candidate, target, mode, eta, output_goal=output_goal)
        trace.append(RepairRecord(
            hypothesis=hypothesis.kind, location=hypothesis.location,
            action=action.op, agent_id=action.agent_id, score=verdict.score,
            candidate=candidate,
        ))
        if verdict.passed:
            return candidate, verdict, trace
        metric = _progress_metric(verdict)
        if metric >= last_metric:
            return abort(StalledRepair, f"no structural progress for goal {goal.id!r}")
        last_metric = metric
    return abort(BudgetExhausted, f"repair budget {budget} spent on goal {goal.id!r}")
