"""Atomic agents and the self-regulating agent pool.

Each agent pairs one goal with the minimal workflow that fulfills it,
plus the tools that workflow touches and a scalar life value.  The pool
supports threshold retrieval, compatibility-weighted probabilistic
selection, life updates from execution outcomes, and periodic
elimination / refresh against an archive.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path as FsPath

from . import workflow as wf
from .errors import DuplicateGoal, InvalidWorkflow, NoEligibleAgent
from .goals import Goal, SimilarityBackend, goal_from_doc, goal_to_doc, schema_compat, similarity


@dataclass
class AgentStats:
    successes: int = 0
    failures: int = 0
    reuses: int = 0
    generalizations: int = 0

    def success_ratio(self) -> float:
        total = self.successes + self.failures
        return self.successes / total if total else 0.0


@dataclass(frozen=True)
class LifeConfig:
    """Life dynamics knobs; defaults keep a fresh agent alive through two failures."""

    l_init: float = 10.0
    l_max: float = 100.0
    alphas: tuple[float, float, float] = (3.0, 1.0, 2.0)
    betas: tuple[float, float, float] = (4.0, 2.0, 1.0)
    drift_threshold: float = 0.5
    refresh_period: int = 10

    def __post_init__(self):
        if not 0 < self.l_init <= self.l_max:
            raise ValueError("l_init must lie in (0, l_max]")
        if any(a < 0 for a in self.alphas) or any(b < 0 for b in self.betas):
            raise ValueError("reward/penalty weights must be non-negative")
        if self.refresh_period < 1:
            raise ValueError("refresh_period must be >= 1")


@dataclass(frozen=True)
class Outcome:
    """One execution event: unit reward flags plus graded penalties.

    ``r_correct`` (verified success) and ``p_fail`` (execution failure)
    are mutually exclusive by definition.
    """

    r_correct: int = 0
    r_reuse: int = 0
    r_general: int = 0
    p_fail: int = 0
    p_drift: int = 0
    p_redundant: float = 0.0

    def __post_init__(self):
        if self.r_correct and self.p_fail:
            raise ValueError("r_correct and p_fail are mutually exclusive")
        if not 0.0 <= self.p_redundant <= 1.0:
            raise ValueError("p_redundant must lie in [0, 1]")


@dataclass
class AtomicAgent:
    agent_id: str
    goal: Goal
    procedure: wf.Workflow
    toolset: frozenset[str]
    constraints: tuple[frozenset[str], frozenset[str]]
    life: float
    stats: AgentStats = field(default_factory=AgentStats)

    @classmethod
    def from_pair(cls, goal: Goal, procedure: wf.Workflow, config: LifeConfig,
                  agent_id: str | None = None) -> "AtomicAgent":
        report = wf.validate(procedure)
        if not report.ok:
            raise InvalidWorkflow(
                f"procedure for goal {goal.id!r}: " + "; ".join(report.violations)
            )
        return cls(
            agent_id=agent_id or goal.id,
            goal=goal,
            procedure=procedure,
            toolset=wf.tools_in(procedure.root),
            constraints=(goal.input_schema, goal.output_schema),
            life=config.l_init,
        )


@dataclass
class Transition:
    """The next unresolved subgoal slot during composition."""

    subgoal: Goal
    available_inputs: frozenset[str]
    shape_context: wf.StructMetrics = wf.StructMetrics(0, 0, 0)


@dataclass
class ChangeLog:
    archived: list[str] = field(default_factory=list)
    revived: list[str] = field(default_factory=list)
    spawned: list[str] = field(default_factory=list)

    def empty(self) -> bool:
        return not (self.archived or self.revived or self.spawned)


@dataclass
class AgentNetwork:
    active: list[AtomicAgent]
    archive: list[AtomicAgent]
    epoch: int
    config: LifeConfig
    backend: SimilarityBackend
    rng_seed: int
    training: list[tuple[Goal, wf.Workflow]] = field(default_factory=list)
    solved_shapes: dict = field(default_factory=dict)

    def agent_by_id(self, agent_id: str) -> AtomicAgent:
        for agent in self.active:
            if agent.agent_id == agent_id:
                return agent
        for agent in self.archive:
            if agent.agent_id == agent_id:
                return agent
        raise KeyError(agent_id)


def build_agents(dataset: list[tuple[Goal, wf.Workflow]], config: LifeConfig | None = None,
                 backend: SimilarityBackend | None = None, rng_seed: int = 0) -> AgentNetwork:
    """One agent per (goal, procedure) pair; by construction each trained
    goal retrieves its own procedure with similarity exactly 1.0."""
    config = config or LifeConfig()
    backend = backend or SimilarityBackend()
    seen: set[str] = set()
    agents: list[AtomicAgent] = []
    for goal, procedure in dataset:
        if goal.id in seen:
            raise DuplicateGoal(f"goal id {goal.id!r} appears twice")
        seen.add(goal.id)
        agents.append(AtomicAgent.from_pair(goal, procedure, config))
    return AgentNetwork(
        active=agents,
        archive=[],
        epoch=0,
        config=config,
        backend=backend,
        rng_seed=rng_seed,
        training=list(dataset),
    )


def retrieve(net: AgentNetwork, goal: Goal, theta: float) -> list[tuple[AtomicAgent, float]]:
    """Active agents with similarity strictly above theta, best first.

    Ties break by ascending agent id; archived agents never appear.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    scored = []
    for agent in net.active:
        score = similarity(net.backend, agent.goal, goal)
        if score > theta:
            scored.append((agent, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0].agent_id))
    return scored


def compatibility(agent: AtomicAgent, transition: Transition,
                  w_familiar: float = 0.5, w_prior: float = 0.5,
                  backend: SimilarityBackend | None = None,
                  input_gate: bool = True) -> float:
    """Hard schema gate times a blend of goal familiarity and success prior."""
    backend = backend or SimilarityBackend()
    if input_gate and not schema_compat(transition.available_inputs, agent.goal):
        return 0.0
    familiar = similarity(backend, agent.goal, transition.subgoal)
    prior = agent.stats.successes / max(1, agent.stats.successes + agent.stats.failures)
    return w_familiar * familiar + w_prior * prior


def select(candidates: list[tuple[AtomicAgent, float]], rng: random.Random,
           use_life: bool = True) -> AtomicAgent:
    """Sample an agent with probability proportional to life * gamma.

    Zero-weight candidates carry exactly zero probability.  With
    ``use_life`` off (scale-control ablation) weights are gamma alone.
    """
    if not candidates:
        raise NoEligibleAgent("empty candidate list")
    weights = [max(0.0, (agent.life if use_life else 1.0) * gamma)
               for agent, gamma in candidates]
    total = sum(weights)
    if total <= 0.0:
        raise NoEligibleAgent("all selection weights are zero")
    draw = rng.random() * total
    acc = 0.0
    for (agent, _), weight in zip(candidates, weights):
        acc += weight
        if draw < acc:
            return agent
    # Unreachable except for float round-off on the last boundary.
    for (agent, _), weight in zip(reversed(candidates), reversed(weights)):
        if weight > 0.0:
            return agent
    raise NoEligibleAgent("all selection weights are zero")


def selection_probabilities(candidates: list[tuple[AtomicAgent, float]],
                            use_life: bool = True) -> list[float]:
    weights = [max(0.0, (agent.life if use_life else 1.0) * gamma)
               for agent, gamma in candidates]
    total = sum(weights)
    if total <= 0.0:
        raise NoEligibleAgent("all selection weights are zero")
    return [w / total for w in weights]


def apply_stats(agent: AtomicAgent, outcome: Outcome) -> None:
    agent.stats.successes += outcome.r_correct
    agent.stats.failures += outcome.p_fail
    agent.stats.reuses += outcome.r_reuse
    agent.stats.generalizations += outcome.r_general


def update_life(agent: AtomicAgent, outcome: Outcome, config: LifeConfig) -> float:
    """Clamp(L + rewards - penalties, 0, L_max); stats counters track the flags."""
    a1, a2, a3 = config.alphas
    b1, b2, b3 = config.betas
    gain = a1 * outcome.r_correct + a2 * outcome.r_reuse + a3 * outcome.r_general
    loss = b1 * outcome.p_fail + b2 * outcome.p_drift + b3 * outcome.p_redundant
    agent.life = min(config.l_max, max(0.0, agent.life + gain - loss))
    apply_stats(agent, outcome)
    return agent.life


def eliminate_and_refresh(net: AgentNetwork) -> ChangeLog:
    """Archive dead agents; every refresh_period epochs, re-cover training goals.

    A coverage hole (a training goal with no active similarity-1.0 agent)
    is filled by reviving the archived agent with the best success ratio,
    ties by id, else by spawning a fresh agent from the training pair.
    The periodicity check uses the pre-increment epoch.
    """
    log = ChangeLog()
    survivors = []
    for agent in net.active:
        if agent.life <= 0.0:
            net.archive.append(agent)
            log.archived.append(agent.agent_id)
        else:
            survivors.append(agent)
    net.active = survivors

    if net.epoch % net.config.refresh_period == 0:
        for goal, procedure in net.training:
            covered = any(
                similarity(net.backend, agent.goal, goal) == 1.0 for agent in net.active
            )
            if covered:
                continue
            matching = [
                agent for agent in net.archive
                if similarity(net.backend, agent.goal, goal) == 1.0
            ]
            if matching:
                matching.sort(key=lambda a: (-a.stats.success_ratio(), a.agent_id))
                chosen = matching[0]
                net.archive.remove(chosen)
                chosen.life = net.config.l_init
                net.active.append(chosen)
                log.revived.append(chosen.agent_id)
            else:
                spawned = AtomicAgent.from_pair(
                    goal, procedure, net.config,
                    agent_id=f"{goal.id}@e{net.epoch}",
                )
                net.active.append(spawned)
                log.spawned.append(spawned.agent_id)
    net.epoch += 1
    return log


# --- snapshot files -----------------------------------------------------------


def _agent_to_doc(agent: AtomicAgent) -> dict:
    return {
        "agent_id": agent.agent_id,
        "goal": goal_to_doc(agent.goal),
        "procedure": wf.to_doc(agent.procedure),
        "life": agent.life,
        "stats": {
            "successes": agent.stats.successes,
            "failures": agent.stats.failures,
            "reuses": agent.stats.reuses,
            "generalizations": agent.stats.generalizations,
        },
    }


def _agent_from_doc(doc: dict, config: LifeConfig) -> AtomicAgent:
    goal = goal_from_doc(doc["goal"])
    agent = AtomicAgent.from_pair(goal, wf.from_doc(doc["procedure"]), config,
                                  agent_id=doc["agent_id"])
    agent.life = float(doc["life"])
    stats = doc.get("stats", {})
    agent.stats = AgentStats(
        successes=stats.get("successes", 0),
        failures=stats.get("failures", 0),
        reuses=stats.get("reuses", 0),
        generalizations=stats.get("generalizations", 0),
    )
    return agent


def save_network(net: AgentNetwork, path: str | FsPath) -> None:
    doc = {
        "epoch": net.epoch,
        "rng_seed": net.rng_seed,
        "backend": {"kind": net.backend.kind, "parameters": dict(net.backend.parameters)},
        "config": {
            "l_init": net.config.l_init,
            "l_max": net.config.l_max,
            "alphas": list(net.config.alphas),
            "betas": list(net.config.betas),
            "drift_threshold": net.config.drift_threshold,
            "refresh_period": net.config.refresh_period,
        },
        "active": [_agent_to_doc(a) for a in net.active],
        "archive": [_agent_to_doc(a) for a in net.archive],
        "training": [
            {"goal": goal_to_doc(g), "workflow": wf.to_doc(w)} for g, w in net.training
        ],
    }
    FsPath(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))


def load_network(path: str | FsPath) -> AgentNetwork:
    doc = json.loads(FsPath(path).read_text())
    cfg = doc["config"]
    config = LifeConfig(
        l_init=cfg["l_init"],
        l_max=cfg["l_max"],
        alphas=tuple(cfg["alphas"]),
        betas=tuple(cfg["betas"]),
        drift_threshold=cfg["drift_threshold"],
        refresh_period=cfg["refresh_period"],
    )
    backend = SimilarityBackend(
        kind=doc["backend"]["kind"],
        parameters=tuple(sorted(doc["backend"].get("parameters", {}).items())),
    )
    net = AgentNetwork(
        active=[_agent_from_doc(d, config) for d in doc["active"]],
        archive=[_agent_from_doc(d, config) for d in doc["archive"]],
        epoch=doc["epoch"],
        config=config,
        backend=backend,
        rng_seed=doc["rng_seed"],
        training=[
            (goal_from_doc(t["goal"]), wf.from_doc(t["workflow"]))
            for t in doc.get("training", ())
        ],
    )
    return net
