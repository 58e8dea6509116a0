"""Goal descriptors, similarity scoring, and schema compatibility.

Similarity is deliberately pluggable but deterministic: the default
backend is Jaccard over descriptor token sets; a weighted-overlap
variant re-weights individual tokens.  Both are symmetric, bounded to
[0, 1], and score identical non-empty token sets at exactly 1.0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path as FsPath

from .errors import EmptyGoal


@dataclass(frozen=True)
class Goal:
    """A goal: identifier, descriptor tokens, and an input/output field interface.

    ``subgoal_template`` is the ground-truth decomposition (ordered part
    goal ids).  It exists for the corpus generator and test oracles only;
    solver-facing loaders strip it.
    """

    id: str
    tokens: frozenset[str]
    input_schema: frozenset[str] = frozenset()
    output_schema: frozenset[str] = frozenset()
    subgoal_template: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("goal id must be non-empty")
        object.__setattr__(self, "tokens", frozenset(self.tokens))
        if not self.tokens:
            raise EmptyGoal(f"goal {self.id!r} has an empty token set")
        object.__setattr__(self, "input_schema", frozenset(self.input_schema))
        object.__setattr__(self, "output_schema", frozenset(self.output_schema))
        if self.subgoal_template is not None:
            object.__setattr__(self, "subgoal_template", tuple(self.subgoal_template))


@dataclass(frozen=True)
class SimilarityBackend:
    """Deterministic token-set similarity: ``jaccard`` or ``weighted-overlap``.

    ``weighted-overlap`` reads per-token weights from ``parameters``
    (missing tokens weigh 1.0) and computes the weighted Jaccard ratio.
    """

    kind: str = "jaccard"
    parameters: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("jaccard", "weighted-overlap"):
            raise ValueError(f"unknown similarity backend {self.kind!r}")
        params = self.parameters
        if isinstance(params, dict):
            params = tuple(sorted(params.items()))
        object.__setattr__(self, "parameters", tuple(params))

    def weight(self, token: str) -> float:
        for key, value in self.parameters:
            if key == token:
                return float(value)
        return 1.0


def similarity(backend: SimilarityBackend, a: Goal, b: Goal) -> float:
    """Score in [0, 1]; symmetric; 1.0 exactly for equal non-empty token sets."""
    if not a.tokens or not b.tokens:
        raise EmptyGoal("similarity requires non-empty token sets")
    union = a.tokens | b.tokens
    inter = a.tokens & b.tokens
    if a.tokens == b.tokens:
        return 1.0
    if backend.kind == "jaccard":
        return len(inter) / len(union)
    inter_w = sum(backend.weight(t) for t in sorted(inter))
    union_w = sum(backend.weight(t) for t in sorted(union))
    if union_w <= 0.0:
        return 0.0
    return inter_w / union_w


def schema_compat(producer_outputs, consumer: Goal) -> bool:
    """True iff every field the consumer requires is already available."""
    return consumer.input_schema <= frozenset(producer_outputs)


# --- goal library files -------------------------------------------------------

ORACLE_SUBGOALS_KEY = "oracle_subgoals"


def goal_to_doc(goal: Goal) -> dict:
    doc = {
        "id": goal.id,
        "tokens": sorted(goal.tokens),
        "input_schema": sorted(goal.input_schema),
        "output_schema": sorted(goal.output_schema),
    }
    if goal.subgoal_template is not None:
        doc[ORACLE_SUBGOALS_KEY] = list(goal.subgoal_template)
    return doc


def goal_from_doc(doc: dict, strip_oracle: bool = False) -> Goal:
    template = None
    if not strip_oracle and ORACLE_SUBGOALS_KEY in doc:
        template = tuple(doc[ORACLE_SUBGOALS_KEY])
    return Goal(
        id=doc["id"],
        tokens=frozenset(doc["tokens"]),
        input_schema=frozenset(doc.get("input_schema", ())),
        output_schema=frozenset(doc.get("output_schema", ())),
        subgoal_template=template,
    )


def save_goal_library(goals: list[Goal], path: str | FsPath) -> None:
    docs = [goal_to_doc(g) for g in goals]
    FsPath(path).write_text(json.dumps(docs, sort_keys=True, separators=(",", ":")))


def load_goal_library(path: str | FsPath, strip_oracle: bool = False) -> list[Goal]:
    docs = json.loads(FsPath(path).read_text())
    return [goal_from_doc(d, strip_oracle=strip_oracle) for d in docs]
