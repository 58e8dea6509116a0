"""The solve loop: recursive decomposition, composition, verification.

A goal that retrieves above threshold resolves to one agent.  Anything
else is split by greedy token set-cover over the active pool, each part
decomposed recursively, and the parts composed left to right.  The
candidate is then verified either against the expected workflow
(oracle mode, structural equality on normalized trees) or against the
goal's declared interface (goal-anchored mode).  Failed candidates are
handed to the structural repair loop when hypotheses are enabled.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Union

from . import workflow as wf
from .agents import (
    AgentNetwork,
    Outcome,
    Transition,
    apply_stats,
    compatibility,
    retrieve,
    select,
    update_life,
)
from .errors import DecompositionFailure, MissingOracle, NoEligibleAgent
from .goals import Goal, similarity
from .seeds import derive_seed


@dataclass(frozen=True)
class Resolved:
    goal: Goal
    agent_id: str


@dataclass(frozen=True)
class Expanded:
    goal: Goal
    children: tuple["DecompositionTree", ...]


DecompositionTree = Union[Resolved, Expanded]


@dataclass(frozen=True)
class SolveConfig:
    theta: float = 0.8
    eta: float = 0.95
    max_depth: int = 8
    k: int = 5
    repair_budget: int = 5
    mode: str = "oracle"  # or "goal_anchored"
    seed: int = 0
    verification: bool = True
    hypothesis: bool = True
    scale_control: bool = True
    input_goal: bool = True
    output_goal: bool = True


@dataclass(frozen=True)
class Verdict:
    passed: bool
    score: float
    mode: str
    edit_script: wf.EditScript = ()
    missing_outputs: frozenset[str] = frozenset()
    dead_node_ratio: float = 0.0

    def to_doc(self) -> dict:
        return {
            "passed": self.passed,
            "score": self.score,
            "mode": self.mode,
            "edit_count": len(self.edit_script),
            "missing_outputs": sorted(self.missing_outputs),
            "dead_node_ratio": round(self.dead_node_ratio, 9),
        }


@dataclass
class RepairRecord:
    hypothesis: str
    location: wf.Path
    action: str
    agent_id: str | None
    score: float
    candidate: wf.Workflow | None = None

    def to_doc(self) -> dict:
        return {
            "hypothesis": self.hypothesis,
            "location": list(self.location),
            "action": self.action,
            "agent_id": self.agent_id,
            "score": self.score,
        }


@dataclass
class EpisodeResult:
    goal_id: str
    candidates: list[tuple[wf.Workflow, Verdict]]
    repairs_applied: list[RepairRecord]
    outcomes: list[tuple[str, Outcome]]
    steps: int
    seed: int
    early_failure: bool = False

    def passed_rank(self) -> int | None:
        for rank, (_, verdict) in enumerate(self.candidates, start=1):
            if verdict.passed:
                return rank
        return None

    def to_doc(self) -> dict:
        return {
            "goal_id": self.goal_id,
            "seed": self.seed,
            "early_failure": self.early_failure,
            "steps": self.steps,
            "candidates": [
                {"workflow": wf.to_doc(c), "verdict": v.to_doc()}
                for c, v in self.candidates
            ],
            "repairs": [r.to_doc() for r in self.repairs_applied],
            "outcomes": [
                [agent_id, {
                    "r_correct": o.r_correct, "r_reuse": o.r_reuse,
                    "r_general": o.r_general, "p_fail": o.p_fail,
                    "p_drift": o.p_drift, "p_redundant": round(o.p_redundant, 9),
                }]
                for agent_id, o in self.outcomes
            ],
        }


# --- decomposition ------------------------------------------------------------


def _cover_split(net: AgentNetwork, goal: Goal) -> list[Goal]:
    """Greedy set-cover of the goal's tokens by active agents' goal tokens.

    Largest remaining overlap wins, ties by ascending agent id; the pick
    order is the subgoal order.
    """
    residual = set(goal.tokens)
    pool = sorted(net.active, key=lambda a: a.agent_id)
    parts: list[Goal] = []
    while residual:
        best = None
        best_overlap = 0
        for agent in pool:
            overlap = len(agent.goal.tokens & residual)
            if overlap > best_overlap:
                best, best_overlap = agent, overlap
        if best is None:
            raise DecompositionFailure(
                f"tokens {sorted(residual)} of goal {goal.id!r} are not coverable"
            )
        parts.append(best.goal)
        residual -= best.goal.tokens
    return parts


def decompose(net: AgentNetwork, goal: Goal, theta: float, max_depth: int,
              rng: random.Random | None = None, *,
              allow_split: bool = True, scale_control: bool = True,
              input_gate: bool = True) -> DecompositionTree:
    """Resolve the goal directly when retrieval clears theta, else split.

    With ``allow_split`` off (the no-hypothesis configuration) an
    unmatched goal raises DecompositionFailure instead of splitting:
    proposing a subgoal structure is itself a structural hypothesis.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    rng = rng or random.Random(net.rng_seed)

    shape = {"length": 0, "depth": 0, "branches": 0}

    def walk(g: Goal, depth: int, scope: frozenset[str]) -> tuple[DecompositionTree, frozenset[str]]:
        candidates = retrieve(net, g, theta)
        if candidates:
            transition = Transition(
                subgoal=g, available_inputs=scope,
                shape_context=wf.StructMetrics(shape["length"], shape["depth"],
                                               shape["branches"]),
            )
            weighted = [
                (agent, compatibility(agent, transition, backend=net.backend,
                                      input_gate=input_gate))
                for agent, _ in candidates
            ]
            try:
                chosen = select(weighted, rng, use_life=scale_control)
            except NoEligibleAgent:
                chosen = None
            if chosen is not None:
                grown = wf.node_metrics(chosen.procedure.root)
                shape["length"] += grown.length
                shape["depth"] = max(shape["depth"], grown.depth)
                shape["branches"] += grown.branch_count
                return Resolved(g, chosen.agent_id), wf.produced_fields(chosen.procedure.root)
        if not allow_split:
            raise DecompositionFailure(
                f"no agent above threshold for goal {g.id!r} and structural "
                "splitting is disabled"
            )
        if depth >= max_depth:
            raise DecompositionFailure(f"depth budget exhausted at goal {g.id!r}")
        parts = _cover_split(net, g)
        children: list[DecompositionTree] = []
        produced: frozenset[str] = frozenset()
        for part in parts:
            child, out = walk(part, depth + 1, scope | produced)
            children.append(child)
            produced = produced | out
        return Expanded(g, tuple(children)), produced

    tree, _ = walk(goal, 1, goal.input_schema)
    return tree


def tree_leaves(tree: DecompositionTree) -> list[Resolved]:
    if isinstance(tree, Resolved):
        return [tree]
    out: list[Resolved] = []
    for child in tree.children:
        out.extend(tree_leaves(child))
    return out


def compose(tree: DecompositionTree, net: AgentNetwork) -> wf.Workflow:
    """Left-to-right fold of leaf procedures.

    A non-root Expanded node marks a recursive sub-decomposition and is
    wrapped in a Nest under its goal id; the root composes flat.  The
    result re-declares its inputs from the composed goal's interface.
    """

    def go(node: DecompositionTree, is_root: bool) -> wf.Workflow:
        if isinstance(node, Resolved):
            return net.agent_by_id(node.agent_id).procedure
        parts = [go(child, False) for child in node.children]
        acc = parts[0]
        for part in parts[1:]:
            acc = wf.concat(acc, part)
        if not is_root:
            acc = wf.nest(acc, (), node.goal.id, acc)
        return acc

    result = go(tree, True)
    return result.replace(
        declared_inputs=tree.goal.input_schema,
        id=f"cand-{tree.goal.id}",
        goal_id=tree.goal.id,
    )


def compose_segments(tree: DecompositionTree, net: AgentNetwork) -> list[tuple[str, int]]:
    """(agent_id, top-level child count) per root part, for fault attribution."""
    if isinstance(tree, Resolved):
        proc = net.agent_by_id(tree.agent_id).procedure
        return [(tree.agent_id, len(wf.child_list(proc.root)))]
    segments: list[tuple[str, int]] = []
    for child in tree.children:
        if isinstance(child, Resolved):
            proc = net.agent_by_id(child.agent_id).procedure
            segments.append((child.agent_id, len(wf.child_list(proc.root))))
        else:
            leaves = tree_leaves(child)
            segments.append((leaves[0].agent_id if leaves else "", 1))
    return segments


# --- verification ---------------------------------------------------------------


def verify(candidate: wf.Workflow, target, mode: str = "oracle", eta: float = 0.95,
           *, output_goal: bool = True) -> Verdict:
    """Oracle mode scores structural equality 0/1 and attaches the edit
    script; goal-anchored mode scores output coverage against the goal,
    zeroed when any task input stays unbound under the goal's inputs."""
    dead = wf.dead_node_ratio(candidate)
    if mode == "oracle":
        if not isinstance(target, wf.Workflow):
            raise MissingOracle("oracle-mode verification needs an expected workflow")
        equal = wf.structurally_equal(candidate, target)
        script = () if equal else wf.diff(candidate, target)
        score = 1.0 if equal else 0.0
        return Verdict(
            passed=score >= eta, score=score, mode="oracle",
            edit_script=script, dead_node_ratio=dead,
        )
    if mode != "goal_anchored":
        raise ValueError(f"unknown verification mode {mode!r}")
    if not isinstance(target, Goal):
        raise ValueError("goal-anchored verification needs a Goal target")
    unbound = bool(wf.dataflow_violations(candidate.root, target.input_schema))
    produced = wf.produced_fields(candidate.root)
    required = target.output_schema
    if output_goal:
        missing = required - produced
        score = (len(required & produced) / len(required)) if required else 1.0
    else:
        missing = frozenset()
        score = 1.0
        dead = 0.0
    if unbound:
        score = 0.0
    return Verdict(
        passed=score >= eta, score=score, mode="goal_anchored",
        missing_outputs=frozenset(missing), dead_node_ratio=dead,
    )


# --- the episode loop ------------------------------------------------------------


def _novelty(net: AgentNetwork, goal: Goal) -> bool:
    """True when no training goal matches at similarity 1.0."""
    return all(similarity(net.backend, g, goal) < 1.0 for g, _ in net.training)


def _localize_fault(verdict: Verdict, segments: list[tuple[str, int]]) -> str | None:
    """Map the first oracle edit to the agent owning that top-level slot."""
    if not verdict.edit_script or not segments:
        return None
    path = verdict.edit_script[0].path
    index = path[0] if path else 0
    acc = 0
    for agent_id, width in segments:
        acc += width
        if index < acc:
            return agent_id
    return segments[-1][0]


def _issue(net: AgentNetwork, episode: EpisodeResult, agent_id: str,
           outcome: Outcome, scale_control: bool) -> None:
    episode.outcomes.append((agent_id, outcome))
    agent = net.agent_by_id(agent_id)
    if scale_control:
        update_life(agent, outcome, net.config)
    else:
        apply_stats(agent, outcome)


def solve(net: AgentNetwork, goal: Goal, config: SolveConfig,
          expected: wf.Workflow | None = None) -> EpisodeResult:
    """Decompose, compose, verify, and repair up to k ranked candidates.

    Every rank draws from its own derived seed, so the rank-1 candidate
    is identical for any k.  DecompositionFailure propagates only when
    hypotheses are disabled; with them enabled it is recorded as an
    early failure.  Outcomes follow the attribution rules: the passing
    path is rewarded, the fault-localized step of a failed candidate is
    penalized.
    """
    from .repair import repair_loop  # deferred to avoid an import cycle

    target = expected if config.mode == "oracle" else goal
    if config.mode == "oracle" and expected is None:
        raise MissingOracle(f"no expected workflow supplied for goal {goal.id!r}")

    episode = EpisodeResult(
        goal_id=goal.id, candidates=[], repairs_applied=[], outcomes=[],
        steps=0, seed=config.seed,
    )
    novel = _novelty(net, goal)
    max_rank = 1 if not config.verification else config.k

    for rank in range(1, max_rank + 1):
        rng = random.Random(derive_seed(config.seed, goal.id, rank))
        try:
            tree = decompose(
                net, goal, config.theta, config.max_depth, rng,
                allow_split=config.hypothesis,
                scale_control=config.scale_control,
                input_gate=config.input_goal,
            )
        except DecompositionFailure:
            if not config.hypothesis:
                raise
            episode.early_failure = True
            break
        candidate = compose(tree, net)
        segments = compose_segments(tree, net)
        path_agents = [leaf.agent_id for leaf in tree_leaves(tree)]
        episode.steps += len(path_agents)

        if not config.verification:
            verdict = verify(candidate, target, config.mode, config.eta,
                             output_goal=config.output_goal)
            episode.candidates.append((candidate, verdict))
            break

        verdict = verify(candidate, target, config.mode, config.eta,
                         output_goal=config.output_goal)
        if not verdict.passed and config.repair_budget >= 1:
            repaired, verdict, trace = repair_loop(
                net, goal, candidate, target, config.repair_budget,
                mode=config.mode, eta=config.eta, theta=config.theta,
                rng=rng, max_depth=config.max_depth,
                scale_control=config.scale_control,
                input_gate=config.input_goal,
                output_goal=config.output_goal,
                raise_on_abort=False,
            )
            candidate = repaired
            for record in trace:
                if record.agent_id is not None:
                    path_agents.append(record.agent_id)
            episode.repairs_applied.extend(trace)
            episode.steps += len(trace)
        episode.candidates.append((candidate, verdict))

        if verdict.passed:
            _reward_path(net, episode, goal, candidate, path_agents, verdict, novel,
                         config.scale_control)
            break
        _penalize_path(net, episode, goal, candidate, path_agents, verdict, segments,
                       config)
    return episode


def _reward_path(net: AgentNetwork, episode: EpisodeResult, goal: Goal,
                 candidate: wf.Workflow, path_agents: list[str], verdict: Verdict,
                 novel: bool, scale_control: bool) -> None:
    signature = wf.shape_signature(candidate)
    prior_goals = net.solved_shapes.get(signature, set())
    reused = any(g != goal.id for g in prior_goals)
    redundant = verdict.dead_node_ratio
    seen: set[str] = set()
    for agent_id in path_agents:
        if agent_id in seen:
            continue
        seen.add(agent_id)
        outcome = Outcome(
            r_correct=1,
            r_reuse=1 if reused else 0,
            r_general=1 if novel else 0,
            p_redundant=redundant,
        )
        _issue(net, episode, agent_id, outcome, scale_control)
    net.solved_shapes.setdefault(signature, set()).add(goal.id)


def _penalize_path(net: AgentNetwork, episode: EpisodeResult, goal: Goal,
                   candidate: wf.Workflow, path_agents: list[str], verdict: Verdict,
                   segments: list[tuple[str, int]], config: SolveConfig) -> None:
    blamed = _localize_fault(verdict, segments) if verdict.mode == "oracle" else None
    drift = 0.0
    if verdict.mode == "goal_anchored" and 0.0 < verdict.score < 1.0:
        produced = wf.produced_fields(candidate.root)
        expected_fields = goal.output_schema
        union = produced | expected_fields
        overlap = produced & expected_fields
        jaccard = (len(overlap) / len(union)) if union else 1.0
        drift = 1.0 - jaccard
    drifted = drift > net.config.drift_threshold
    seen: set[str] = set()
    for agent_id in path_agents:
        if agent_id in seen:
            continue
        seen.add(agent_id)
        p_fail = 1 if agent_id == blamed else 0
        p_drift = 1 if drifted else 0
        if not (p_fail or p_drift):
            continue
        outcome = Outcome(p_fail=p_fail, p_drift=p_drift)
        _issue(net, episode, agent_id, outcome, config.scale_control)
