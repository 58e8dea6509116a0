"""Synthetic workflow corpus generation, splitting, and novel-goal construction.

A corpus profile fixes the marginal distributions of task count and
nesting depth plus a tool vocabulary size.  Generation is quota based:
per-value counts come from largest-remainder rounding, so empirical
histograms track the profile to within rounding error, and the two
marginals are coupled only by the feasibility rule that a nested
workflow needs at least two tasks.

Tools have fixed global schemas: each consumes one or two fields (from
a small shared context pool or another tool's output) and produces one
or two fields unique to the tool.  A workflow declares as inputs
exactly the fields its tasks consume but never produce internally, so
every generated workflow validates by construction.

Goal descriptor tokens are unique per goal, which keeps atomic goals
pairwise dissimilar; composite goals carry the token union of their
parts together with a ground-truth ordered part list stored under an
oracle-only key.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path as FsPath

from . import workflow as wf
from .errors import InfeasibleProfile
from .goals import ORACLE_SUBGOALS_KEY, Goal, goal_from_doc, goal_to_doc
from .seeds import derive_seed

CONTEXT_POOL = tuple(f"ctx_{i:02d}" for i in range(12))

# Observed structural mix of a large multi-domain workflow inventory:
# heavily single-step with a long multi-step tail, and mostly flat with
# shallow nesting.  Used as the default generation target.
DEFAULT_NODE_COUNTS = {
    1: 14508, 2: 2252, 3: 4496, 4: 1166, 5: 476, 6: 226, 7: 103, 8: 143,
    9: 51, 10: 5, 11: 28, 12: 2, 13: 33, 14: 1, 16: 11,
}
DEFAULT_DEPTH_COUNTS = {0: 16434, 1: 6425, 2: 451, 3: 121, 4: 56, 5: 18, 6: 16}


def proportions(counts: dict[int, int]) -> dict[int, float]:
    total = sum(counts.values())
    return {k: v / total for k, v in sorted(counts.items())}


@dataclass(frozen=True)
class PlantedSubflowSpec:
    length: int
    rate: float

    def __post_init__(self):
        if not 2 <= self.length <= 5:
            raise ValueError("planted pattern length must be 2..5")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("planting rate must lie in [0, 1]")


@dataclass(frozen=True)
class CorpusProfile:
    total: int
    node_histogram: dict[int, float]
    depth_histogram: dict[int, float]
    tool_vocab_size: int = 64
    planted: PlantedSubflowSpec | None = None

    def __post_init__(self):
        if self.total < 1:
            raise InfeasibleProfile("total must be >= 1")
        if self.tool_vocab_size < 1:
            raise InfeasibleProfile("tool vocabulary must be non-empty")
        for name, hist in (("node", self.node_histogram), ("depth", self.depth_histogram)):
            if not hist:
                raise InfeasibleProfile(f"{name} histogram is empty")
            if abs(sum(hist.values()) - 1.0) > 1e-9:
                raise InfeasibleProfile(f"{name} histogram proportions must sum to 1")
            if any(p < 0 for p in hist.values()):
                raise InfeasibleProfile(f"{name} histogram has negative mass")
        if any(k < 1 for k in self.node_histogram):
            raise InfeasibleProfile("node counts must be >= 1")
        if any(k < 0 for k in self.depth_histogram):
            raise InfeasibleProfile("depths must be >= 0")


def default_profile(total: int = 10000,
                    planted: PlantedSubflowSpec | None = None) -> CorpusProfile:
    return CorpusProfile(
        total=total,
        node_histogram=proportions(DEFAULT_NODE_COUNTS),
        depth_histogram=proportions(DEFAULT_DEPTH_COUNTS),
        planted=planted,
    )


@dataclass(frozen=True)
class CorpusRecord:
    goal: Goal
    workflow: wf.Workflow
    bucket_kind: str  # "linear" | "nested"
    bucket_size: str
    planted: tuple[tuple[int, wf.Path], ...] = ()

    @property
    def bucket(self) -> str:
        return f"{self.bucket_kind} {self.bucket_size}"


def bucket_labels(m: wf.StructMetrics) -> tuple[str, str]:
    """Linear flows bucket by task count, nested flows by depth."""
    if m.depth == 0:
        if m.length <= 1:
            return "linear", "1"
        if m.length <= 3:
            return "linear", "2-3"
        if m.length <= 6:
            return "linear", "4-6"
        return "linear", "7+"
    if m.depth <= 2:
        return "nested", "1-2"
    if m.depth <= 4:
        return "nested", "3-4"
    return "nested", "5+"


# --- tool vocabulary -----------------------------------------------------------


def build_tool_vocabulary(size: int, seed: int) -> dict[str, wf.TaskNode]:
    """Fixed task node per tool; outputs are unique to the tool, inputs come
    from the shared context pool or occasionally another tool's output."""
    rng = random.Random(derive_seed(seed, "vocab"))
    outputs: dict[str, tuple[str, ...]] = {}
    for k in range(size):
        tool = f"t{k:03d}"
        outputs[tool] = tuple(f"{tool}_o{j}" for j in range(rng.randint(1, 2)))
    vocab: dict[str, wf.TaskNode] = {}
    tools = sorted(outputs)
    for tool in tools:
        n_inputs = rng.randint(1, 2)
        fields: set[str] = set()
        while len(fields) < n_inputs:
            if len(tools) > 1 and rng.random() < 0.3:
                other = rng.choice(tools)
                if other == tool:
                    continue
                fields.add(rng.choice(outputs[other]))
            else:
                fields.add(rng.choice(CONTEXT_POOL))
        vocab[tool] = wf.TaskNode(
            tool_id=tool,
            input_schema=frozenset(fields),
            output_schema=frozenset(outputs[tool]),
        )
    return vocab


def unbound_inputs(tasks: list[wf.TaskNode]) -> frozenset[str]:
    available: set[str] = set()
    needed: set[str] = set()
    for task in tasks:
        needed |= set(task.input_schema) - available
        available |= set(task.output_schema)
    return frozenset(needed)


# --- generation -----------------------------------------------------------------


def _quota(hist: dict[int, float], total: int) -> dict[int, int]:
    """Largest-remainder rounding of proportions to integer counts."""
    items = sorted(hist.items())
    raw = [(k, p * total) for k, p in items]
    counts = {k: int(x) for k, x in raw}
    remainder = total - sum(counts.values())
    by_frac = sorted(raw, key=lambda kv: (-(kv[1] - int(kv[1])), kv[0]))
    for k, _ in by_frac[:remainder]:
        counts[k] += 1
    return counts


def _structure(tasks: list[wf.TaskNode], depth: int, rng: random.Random,
               goal_id: str, level: int = 0) -> wf.WorkflowNode:
    if depth == 0:
        if len(tasks) == 1:
            return tasks[0]
        return wf.Sequence(tuple(tasks))
    start = rng.randrange(0, len(tasks))
    stop = rng.randrange(start + 1, len(tasks) + 1)
    inner = _structure(tasks[start:stop], depth - 1, rng, goal_id, level + 1)
    nest_node = wf.Nest(f"{goal_id}.s{level}", inner)
    children: list[wf.WorkflowNode] = list(tasks[:start]) + [nest_node] + list(tasks[stop:])
    if len(children) == 1:
        return children[0]
    return wf.Sequence(tuple(children))


def generate(profile: CorpusProfile, seed: int, id_prefix: str = "g") -> list[CorpusRecord]:
    """Produce profile.total validated records, deterministic in the seed.

    ``id_prefix`` namespaces goal ids (and thus descriptor tokens), so
    corpora generated with the same seed and vocabulary can be merged.
    Raises InfeasibleProfile when the depth quota demands more nested
    records than there are multi-task records to carry them (a workflow
    of depth >= 1 needs at least two tasks here).
    """
    vocab = build_tool_vocabulary(profile.tool_vocab_size, seed)
    tool_ids = sorted(vocab)

    node_counts = _quota(profile.node_histogram, profile.total)
    depth_counts = _quota(profile.depth_histogram, profile.total)

    node_values: list[int] = []
    for value, count in sorted(node_counts.items()):
        node_values.extend([value] * count)
    rng = random.Random(derive_seed(seed, "layout"))
    rng.shuffle(node_values)

    deep_needed = sum(c for d, c in depth_counts.items() if d >= 1)
    eligible = [i for i, n in enumerate(node_values) if n >= 2]
    if deep_needed > len(eligible):
        raise InfeasibleProfile(
            f"depth quota needs {deep_needed} multi-task records, only "
            f"{len(eligible)} available"
        )
    deep_values: list[int] = []
    for value, count in sorted(depth_counts.items()):
        if value >= 1:
            deep_values.extend([value] * count)
    rng.shuffle(deep_values)
    rng.shuffle(eligible)
    depth_of = {i: 0 for i in range(profile.total)}
    for index, depth in zip(eligible, deep_values):
        depth_of[index] = depth

    pattern_tools: list[str] = []
    if profile.planted is not None:
        pattern_rng = random.Random(derive_seed(seed, "pattern"))
        pattern_tools = pattern_rng.sample(tool_ids, profile.planted.length)

    records: list[CorpusRecord] = []
    for index in range(profile.total):
        r = random.Random(derive_seed(seed, "record", index))
        n = node_values[index]
        depth = depth_of[index]
        tools = [r.choice(tool_ids) for _ in range(n)]

        planted: tuple[tuple[int, wf.Path], ...] = ()
        if pattern_tools and n >= len(pattern_tools) and r.random() < profile.planted.rate:
            start = r.randrange(0, n - len(pattern_tools) + 1)
            tools[start : start + len(pattern_tools)] = pattern_tools
            planted = ((0, (start,)),)

        tasks = [vocab[t] for t in tools]
        goal_id = f"{id_prefix}{index:05d}"
        root = _structure(tasks, depth, r, goal_id)
        inputs = unbound_inputs(tasks)
        outputs = frozenset().union(*(t.output_schema for t in tasks))
        workflow = wf.Workflow(
            root=root,
            declared_inputs=inputs,
            declared_outputs=outputs,
            id=f"w-{goal_id}",
            goal_id=goal_id,
        )
        token_count = r.randint(3, 5)
        goal = Goal(
            id=goal_id,
            tokens=frozenset(f"{goal_id}:k{j}" for j in range(token_count)),
            input_schema=inputs,
            output_schema=outputs,
        )
        kind, size = bucket_labels(wf.node_metrics(root))
        records.append(CorpusRecord(goal, workflow, kind, size, planted))
    return records


def planted_library(profile: CorpusProfile, seed: int) -> list[wf.Workflow]:
    """The pattern workflows the generator plants, in library order."""
    if profile.planted is None:
        return []
    vocab = build_tool_vocabulary(profile.tool_vocab_size, seed)
    pattern_rng = random.Random(derive_seed(seed, "pattern"))
    tools = pattern_rng.sample(sorted(vocab), profile.planted.length)
    tasks = [vocab[t] for t in tools]
    return [wf.Workflow(
        root=wf.Sequence(tuple(tasks)),
        declared_inputs=unbound_inputs(tasks),
        declared_outputs=frozenset().union(*(t.output_schema for t in tasks)),
        id="pattern0",
    )]


# --- splitting ------------------------------------------------------------------


def split(corpus: list[CorpusRecord], train_fraction: float,
          seed: int) -> tuple[list[CorpusRecord], list[CorpusRecord]]:
    """Seeded stratified partition preserving per-bucket train shares."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    groups: dict[str, list[int]] = {}
    for i, record in enumerate(corpus):
        groups.setdefault(record.bucket, []).append(i)

    total_train = round(train_fraction * len(corpus))
    labels = sorted(groups)
    raw = [(label, len(groups[label]) * train_fraction) for label in labels]
    take = {label: int(x) for label, x in raw}
    remainder = total_train - sum(take.values())
    by_frac = sorted(raw, key=lambda kv: (-(kv[1] - int(kv[1])), kv[0]))
    for label, _ in by_frac[:remainder]:
        take[label] += 1

    rng = random.Random(derive_seed(seed, "split"))
    train_idx: set[int] = set()
    for label in labels:
        indices = list(groups[label])
        rng.shuffle(indices)
        train_idx.update(indices[: take[label]])
    train = [r for i, r in enumerate(corpus) if i in train_idx]
    test = [r for i, r in enumerate(corpus) if i not in train_idx]
    return train, test


# --- novel composite goals -------------------------------------------------------


def make_novel_goals(train: list[CorpusRecord], seed: int, count: int,
                     parts_range: tuple[int, int] = (2, 3),
                     structure: str = "linear",
                     id_prefix: str | None = None) -> list[CorpusRecord]:
    """Composite goals unseen as a whole: token unions of sampled trained goals.

    The ground-truth workflow is the concatenation of the parts'
    procedures in sampled order, wrapped in one sub-workflow boundary
    for the nested structure.  Declared inputs are the union of the
    parts' input interfaces, so any part permutation still binds.
    """
    lo, hi = parts_range
    if not 2 <= lo <= hi:
        raise ValueError("parts_range must satisfy 2 <= lo <= hi")
    if structure not in ("linear", "nested"):
        raise ValueError(f"unknown structure {structure!r}")
    if len(train) < hi:
        raise ValueError("train corpus too small for the requested parts range")
    prefix = id_prefix if id_prefix is not None else f"novel-{structure}"
    rng = random.Random(derive_seed(seed, "novel", structure, prefix))
    out: list[CorpusRecord] = []
    for i in range(count):
        m = rng.randint(lo, hi)
        parts = rng.sample(train, m)
        goal_id = f"{prefix}-{i:04d}"
        expected = parts[0].workflow
        for part in parts[1:]:
            expected = wf.concat(expected, part.workflow)
        inputs = frozenset().union(*(p.goal.input_schema for p in parts))
        outputs = frozenset().union(*(p.goal.output_schema for p in parts))
        expected = expected.replace(
            declared_inputs=inputs, declared_outputs=outputs,
            id=f"w-{goal_id}", goal_id=goal_id,
        )
        if structure == "nested":
            expected = wf.nest(expected, (), goal_id, expected)
        goal = Goal(
            id=goal_id,
            tokens=frozenset().union(*(p.goal.tokens for p in parts)),
            input_schema=inputs,
            output_schema=outputs,
            subgoal_template=tuple(p.goal.id for p in parts),
        )
        kind, size = bucket_labels(wf.node_metrics(expected.root))
        out.append(CorpusRecord(goal, expected, kind, size))
    return out


# --- corpus files ------------------------------------------------------------------


def record_to_doc(record: CorpusRecord) -> dict:
    return {
        "goal": goal_to_doc(record.goal),
        "workflow": wf.to_doc(record.workflow),
        "bucket": {"kind": record.bucket_kind, "size": record.bucket_size},
        "oracle": {"planted": [[idx, list(path)] for idx, path in record.planted]},
    }


def record_from_doc(doc: dict, strip_oracle: bool = False) -> CorpusRecord:
    goal_doc = dict(doc["goal"])
    if strip_oracle:
        goal_doc.pop(ORACLE_SUBGOALS_KEY, None)
    planted: tuple[tuple[int, wf.Path], ...] = ()
    if not strip_oracle:
        planted = tuple(
            (int(idx), tuple(path))
            for idx, path in doc.get("oracle", {}).get("planted", ())
        )
    return CorpusRecord(
        goal=goal_from_doc(goal_doc, strip_oracle=strip_oracle),
        workflow=wf.from_doc(doc["workflow"]),
        bucket_kind=doc["bucket"]["kind"],
        bucket_size=doc["bucket"]["size"],
        planted=planted,
    )


def save_corpus(records: list[CorpusRecord], path: str | FsPath) -> None:
    lines = [wf.canonical_json(record_to_doc(r)) for r in records]
    FsPath(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_corpus(path: str | FsPath, strip_oracle: bool = False) -> list[CorpusRecord]:
    records: list[CorpusRecord] = []
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_doc(json.loads(line), strip_oracle=strip_oracle))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"corrupt corpus line {number}: {exc}") from exc
    return records


def save_profile(profile: CorpusProfile, path: str | FsPath) -> None:
    doc = {
        "total": profile.total,
        "node_histogram": {str(k): v for k, v in sorted(profile.node_histogram.items())},
        "depth_histogram": {str(k): v for k, v in sorted(profile.depth_histogram.items())},
        "tool_vocab_size": profile.tool_vocab_size,
        "planted": (
            {"length": profile.planted.length, "rate": profile.planted.rate}
            if profile.planted is not None else None
        ),
    }
    FsPath(path).write_text(wf.canonical_json(doc))


def load_profile(path: str | FsPath) -> CorpusProfile:
    doc = json.loads(FsPath(path).read_text())
    planted = None
    if doc.get("planted"):
        planted = PlantedSubflowSpec(doc["planted"]["length"], doc["planted"]["rate"])
    return CorpusProfile(
        total=doc["total"],
        node_histogram={int(k): v for k, v in doc["node_histogram"].items()},
        depth_histogram={int(k): v for k, v in doc["depth_histogram"].items()},
        tool_vocab_size=doc.get("tool_vocab_size", 64),
        planted=planted,
    )
