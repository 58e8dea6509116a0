"""Workflow trees and the structural algebra over them.

A workflow is an immutable ordered tree.  Leaves are tool invocations
(:class:`TaskNode`); interior nodes are :class:`Sequence` (ordered
execution), :class:`Branch` (a conditional side path that never touches
the main path), and :class:`Nest` (a named sub-workflow boundary).

The module provides:

* validation with a left-to-right dataflow check,
* structural metrics (task count, nesting depth, branch count),
* normalization, flattening, and structural equality,
* the three composition operators ``concat`` / ``branch`` / ``nest``,
* a deterministic tree diff with edit-script application,
* contiguous subflow pattern matching,
* a canonical, byte-stable JSON serialization.

Conventions: a flat workflow has depth 0 and each Nest wrapper adds one
level; Branch adds none.  Structural equality compares normalized trees,
where nested Sequences are spliced into their parent, empty Sequences
are dropped, and single-child Sequences collapse to the child.
"""

from __future__ import annotations

import dataclasses
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Union

from .errors import BadPath, InvalidWorkflow

Literal = Union[str, int, float, bool, None]
Path = tuple[int, ...]

PREDICATE_OPS = ("equals", "exists", "not_exists")


@dataclass(frozen=True)
class Predicate:
    """Branch guard over context fields: equals / exists / not_exists."""

    key: str
    op: str
    value: Literal = None

    def __post_init__(self):
        if not self.key:
            raise ValueError("predicate key must be non-empty")
        if self.op not in PREDICATE_OPS:
            raise ValueError(f"unknown predicate op {self.op!r}")
        if self.op == "equals" and self.value is None:
            raise ValueError("equals requires a value")
        if self.op != "equals" and self.value is not None:
            raise ValueError(f"{self.op} forbids a value")

    def evaluate(self, context: dict[str, Literal]) -> bool:
        if self.op == "equals":
            return context.get(self.key) == self.value
        if self.op == "exists":
            return self.key in context
        return self.key not in context


@dataclass(frozen=True)
class TaskNode:
    """One atomic tool invocation with fixed input/output field schemas."""

    tool_id: str
    input_schema: frozenset[str] = frozenset()
    output_schema: frozenset[str] = frozenset()
    params: tuple[tuple[str, Literal], ...] = ()

    def __post_init__(self):
        if not self.tool_id:
            raise ValueError("tool_id must be non-empty")
        object.__setattr__(self, "input_schema", frozenset(self.input_schema))
        object.__setattr__(self, "output_schema", frozenset(self.output_schema))
        params = self.params
        if isinstance(params, dict):
            params = tuple(sorted(params.items()))
        object.__setattr__(self, "params", tuple(params))


@dataclass(frozen=True)
class Sequence:
    children: tuple["WorkflowNode", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Branch:
    cond: Predicate
    then: "WorkflowNode"
    orelse: "WorkflowNode | None" = None


@dataclass(frozen=True)
class Nest:
    sub_goal_id: str
    body: "WorkflowNode"

    def __post_init__(self):
        if not self.sub_goal_id:
            raise ValueError("sub_goal_id must be non-empty")


WorkflowNode = Union[TaskNode, Sequence, Branch, Nest]


@dataclass(frozen=True)
class Workflow:
    """A workflow tree plus its declared input/output interface."""

    root: WorkflowNode
    declared_inputs: frozenset[str] = frozenset()
    declared_outputs: frozenset[str] = frozenset()
    id: str = ""
    goal_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "declared_inputs", frozenset(self.declared_inputs))
        object.__setattr__(self, "declared_outputs", frozenset(self.declared_outputs))

    def replace(self, **changes) -> "Workflow":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class StructMetrics:
    length: int
    depth: int
    branch_count: int


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()


# --- tree navigation -------------------------------------------------------


def children_of(node: WorkflowNode) -> tuple[WorkflowNode, ...]:
    """Addressable children: Sequence list, Branch (then, else), Nest (body,)."""
    if isinstance(node, Sequence):
        return node.children
    if isinstance(node, Branch):
        return (node.then,) if node.orelse is None else (node.then, node.orelse)
    if isinstance(node, Nest):
        return (node.body,)
    return ()


def child_list(node: WorkflowNode) -> tuple[WorkflowNode, ...]:
    """A node viewed as a splice list: its children if a Sequence, else itself."""
    if isinstance(node, Sequence):
        return node.children
    return (node,)


def node_at(root: WorkflowNode, path: Path) -> WorkflowNode:
    node = root
    for step in path:
        kids = children_of(node)
        if not 0 <= step < len(kids):
            raise BadPath(f"path {path} does not resolve (stuck at index {step})")
        node = kids[step]
    return node


def replace_at(root: WorkflowNode, path: Path, new: WorkflowNode) -> WorkflowNode:
    if not path:
        return new
    step, rest = path[0], path[1:]
    kids = children_of(root)
    if not 0 <= step < len(kids):
        raise BadPath(f"path {path} does not resolve in {type(root).__name__}")
    replaced = replace_at(kids[step], rest, new)
    if isinstance(root, Sequence):
        out = list(root.children)
        out[step] = replaced
        return Sequence(tuple(out))
    if isinstance(root, Branch):
        if step == 0:
            return Branch(root.cond, replaced, root.orelse)
        return Branch(root.cond, root.then, replaced)
    if isinstance(root, Nest):
        return Nest(root.sub_goal_id, replaced)
    raise BadPath(f"cannot descend into a task node at {path}")


def task_order(node: WorkflowNode) -> tuple[TaskNode, ...]:
    """All task nodes in execution order (branch arms included, then before else)."""
    if isinstance(node, TaskNode):
        return (node,)
    if isinstance(node, Sequence):
        out: list[TaskNode] = []
        for child in node.children:
            out.extend(task_order(child))
        return tuple(out)
    if isinstance(node, Branch):
        out = list(task_order(node.then))
        if node.orelse is not None:
            out.extend(task_order(node.orelse))
        return tuple(out)
    return task_order(node.body)


def tools_in(node: WorkflowNode) -> frozenset[str]:
    return frozenset(t.tool_id for t in task_order(node))


# --- validation ------------------------------------------------------------


def produced_fields(node: WorkflowNode) -> frozenset[str]:
    """Fields guaranteed to be produced: branch arms only count when both arms agree."""
    if isinstance(node, TaskNode):
        return node.output_schema
    if isinstance(node, Sequence):
        acc: frozenset[str] = frozenset()
        for child in node.children:
            acc |= produced_fields(child)
        return acc
    if isinstance(node, Branch):
        if node.orelse is None:
            return frozenset()
        return produced_fields(node.then) & produced_fields(node.orelse)
    return produced_fields(node.body)


def dataflow_violations(root: WorkflowNode, inputs: Iterable[str]) -> list[str]:
    """Left-to-right binding check: every task input must be declared or produced earlier."""
    violations: list[str] = []

    def check(node: WorkflowNode, scope: frozenset[str], path: Path, is_root: bool) -> frozenset[str]:
        if isinstance(node, TaskNode):
            missing = node.input_schema - scope
            if missing:
                violations.append(
                    f"unbound input {sorted(missing)} for task {node.tool_id!r} at {list(path)}"
                )
            return node.output_schema
        if isinstance(node, Sequence):
            if not node.children and not is_root:
                violations.append(f"empty sequence at {list(path)}")
            acc: frozenset[str] = frozenset()
            for i, child in enumerate(node.children):
                acc |= check(child, scope | acc, path + (i,), False)
            return acc
        if isinstance(node, Branch):
            then_out = check(node.then, scope, path + (0,), False)
            if node.orelse is None:
                return frozenset()
            else_out = check(node.orelse, scope, path + (1,), False)
            return then_out & else_out
        return check(node.body, scope, path + (0,), False)

    check(root, frozenset(inputs), (), True)
    return violations


def validate(w: Workflow) -> ValidationReport:
    """Check structural invariants plus dataflow satisfiability.

    An empty Sequence is tolerated only at the root, where it denotes the
    empty workflow (the concat identity); anywhere else it is a violation.
    """
    violations = dataflow_violations(w.root, w.declared_inputs)
    return ValidationReport(not violations, tuple(violations))


# --- metrics ---------------------------------------------------------------


def metrics(w: Workflow, check: bool = True) -> StructMetrics:
    if check:
        report = validate(w)
        if not report.ok:
            raise InvalidWorkflow("; ".join(report.violations))
    return node_metrics(w.root)


def node_metrics(node: WorkflowNode) -> StructMetrics:
    if isinstance(node, TaskNode):
        return StructMetrics(1, 0, 0)
    if isinstance(node, Sequence):
        parts = [node_metrics(c) for c in node.children]
        return StructMetrics(
            sum(p.length for p in parts),
            max((p.depth for p in parts), default=0),
            sum(p.branch_count for p in parts),
        )
    if isinstance(node, Branch):
        then_m = node_metrics(node.then)
        else_m = node_metrics(node.orelse) if node.orelse is not None else StructMetrics(0, 0, 0)
        return StructMetrics(
            then_m.length + else_m.length,
            max(then_m.depth, else_m.depth),
            then_m.branch_count + else_m.branch_count + 1,
        )
    body = node_metrics(node.body)
    return StructMetrics(body.length, body.depth + 1, body.branch_count)


# --- normalization and flattening ------------------------------------------


def normalize_node(node: WorkflowNode) -> WorkflowNode:
    if isinstance(node, TaskNode):
        return node
    if isinstance(node, Nest):
        return Nest(node.sub_goal_id, normalize_node(node.body))
    if isinstance(node, Branch):
        orelse = normalize_node(node.orelse) if node.orelse is not None else None
        return Branch(node.cond, normalize_node(node.then), orelse)
    out: list[WorkflowNode] = []
    for child in node.children:
        norm = normalize_node(child)
        if isinstance(norm, Sequence):
            out.extend(norm.children)
        else:
            out.append(norm)
    if len(out) == 1:
        return out[0]
    return Sequence(tuple(out))


def normalize(w: Workflow) -> Workflow:
    return w.replace(root=normalize_node(w.root))


def structurally_equal(a: Workflow, b: Workflow) -> bool:
    return normalize_node(a.root) == normalize_node(b.root)


def flatten_node(node: WorkflowNode) -> WorkflowNode:
    if isinstance(node, TaskNode):
        return node
    if isinstance(node, Nest):
        return flatten_node(node.body)
    if isinstance(node, Branch):
        orelse = flatten_node(node.orelse) if node.orelse is not None else None
        return Branch(node.cond, flatten_node(node.then), orelse)
    out: list[WorkflowNode] = []
    for child in node.children:
        flat = flatten_node(child)
        if isinstance(flat, Sequence):
            out.extend(flat.children)
        else:
            out.append(flat)
    if len(out) == 1:
        return out[0]
    return Sequence(tuple(out))


def flatten(w: Workflow) -> Workflow:
    """Inline every Nest wrapper; task order is preserved and depth drops to 0."""
    return w.replace(root=flatten_node(w.root))


# --- composition operators --------------------------------------------------


def concat(a: Workflow, b: Workflow) -> Workflow:
    """Splice b after a.  Inputs are a's; outputs are the union of both."""
    root = Sequence(child_list(a.root) + child_list(b.root))
    return Workflow(
        root=root,
        declared_inputs=a.declared_inputs,
        declared_outputs=a.declared_outputs | b.declared_outputs,
    )


def branch(host: Workflow, cond: Predicate, alt: Workflow) -> Workflow:
    """Append a conditional side path at the host's insertion frontier.

    The main execution path and the declared interface are unchanged;
    the alternative runs only when ``cond`` holds.
    """
    node = Branch(cond, alt.root, None)
    root = Sequence(child_list(host.root) + (node,))
    return Workflow(
        root=root,
        declared_inputs=host.declared_inputs,
        declared_outputs=host.declared_outputs,
        id=host.id,
        goal_id=host.goal_id,
    )


def nest(host: Workflow, slot_path: Path, sub_goal: str, body: Workflow) -> Workflow:
    """Replace the node at slot_path with a Nest(sub_goal, body) boundary."""
    node_at(host.root, slot_path)  # raises BadPath when unresolved
    new_node = Nest(sub_goal, body.root)
    return Workflow(
        root=replace_at(host.root, slot_path, new_node),
        declared_inputs=host.declared_inputs,
        declared_outputs=host.declared_outputs,
        id=host.id,
        goal_id=host.goal_id,
    )


# --- diff / patch -----------------------------------------------------------


@dataclass(frozen=True)
class InsertNode:
    path: Path
    node: WorkflowNode


@dataclass(frozen=True)
class DeleteNode:
    path: Path


@dataclass(frozen=True)
class ReorderChildren:
    path: Path
    permutation: tuple[int, ...]


@dataclass(frozen=True)
class ReplaceSubtree:
    path: Path
    node: WorkflowNode


Edit = Union[InsertNode, DeleteNode, ReorderChildren, ReplaceSubtree]
EditScript = tuple[Edit, ...]


def _lcs_pairs(s: tuple, t: tuple) -> list[tuple[int, int]]:
    m, n = len(s), len(t)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m - 1, -1, -1):
        row, below = table[i], table[i + 1]
        for j in range(n - 1, -1, -1):
            if s[i] == t[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]
    pairs = []
    i = j = 0
    while i < m and j < n:
        if s[i] == t[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def _diff_children(s: tuple, t: tuple, path: Path) -> list[Edit]:
    if s == t:
        return []
    if len(s) == len(t) and Counter(s) == Counter(t):
        used = [False] * len(s)
        perm = []
        for item in t:
            for j, src in enumerate(s):
                if not used[j] and src == item:
                    used[j] = True
                    perm.append(j)
                    break
        return [ReorderChildren(path, tuple(perm))]
    pairs = _lcs_pairs(s, t)
    matched_s = {i for i, _ in pairs}
    matched_t = {j for _, j in pairs}
    unmatched_s = [i for i in range(len(s)) if i not in matched_s]
    unmatched_t = [j for j in range(len(t)) if j not in matched_t]
    if len(s) == len(t) and unmatched_s == unmatched_t:
        edits: list[Edit] = []
        for i in unmatched_s:
            edits.extend(_diff_nodes(s[i], t[i], path + (i,)))
        return edits
    # Deletions right-to-left keep source indices valid; insertions then go
    # left-to-right at their final target positions.
    edits = [DeleteNode(path + (i,)) for i in reversed(unmatched_s)]
    edits.extend(InsertNode(path + (j,), t[j]) for j in unmatched_t)
    return edits


def _diff_nodes(src: WorkflowNode, tgt: WorkflowNode, path: Path) -> list[Edit]:
    if src == tgt:
        return []
    if isinstance(src, Sequence) or isinstance(tgt, Sequence):
        return _diff_children(child_list(src), child_list(tgt), path)
    if type(src) is not type(tgt):
        return [ReplaceSubtree(path, tgt)]
    if isinstance(src, TaskNode):
        return [ReplaceSubtree(path, tgt)]
    if isinstance(src, Nest):
        if src.sub_goal_id != tgt.sub_goal_id:
            return [ReplaceSubtree(path, tgt)]
        return _diff_nodes(src.body, tgt.body, path + (0,))
    # Branch
    if src.cond != tgt.cond or (src.orelse is None) != (tgt.orelse is None):
        return [ReplaceSubtree(path, tgt)]
    edits = _diff_nodes(src.then, tgt.then, path + (0,))
    if src.orelse is not None:
        edits.extend(_diff_nodes(src.orelse, tgt.orelse, path + (1,)))
    return edits


def diff(source: Workflow, target: Workflow) -> EditScript:
    """Edit script turning source into target, computed on normalized trees.

    Paths address the promoted-root view used by :func:`apply_edits` (the
    root seen as its splice list).  Single-edit faults (one insertion, one
    deletion, one transposition of siblings) yield single-edit scripts;
    arbitrary pairs still round-trip through apply_edits up to
    normalization.
    """
    src = normalize_node(source.root)
    tgt = normalize_node(target.root)
    return tuple(_diff_children(child_list(src), child_list(tgt), ()))


def _apply_one(root: WorkflowNode, edit: Edit) -> WorkflowNode:
    if isinstance(edit, ReplaceSubtree):
        return replace_at(root, edit.path, edit.node)
    if isinstance(edit, ReorderChildren):
        target = node_at(root, edit.path)
        kids = child_list(target)
        if sorted(edit.permutation) != list(range(len(kids))):
            raise BadPath(f"permutation {edit.permutation} does not fit {len(kids)} children")
        return replace_at(root, edit.path, Sequence(tuple(kids[i] for i in edit.permutation)))
    if not edit.path:
        raise BadPath("insert/delete require a parent path")
    parent_path, index = edit.path[:-1], edit.path[-1]
    parent = node_at(root, parent_path)
    kids = list(child_list(parent))
    if isinstance(edit, InsertNode):
        if not 0 <= index <= len(kids):
            raise BadPath(f"insert index {index} out of range")
        kids.insert(index, edit.node)
    else:
        if not 0 <= index < len(kids):
            raise BadPath(f"delete index {index} out of range")
        del kids[index]
    return replace_at(root, parent_path, Sequence(tuple(kids)))


def apply_edits(script: Iterable[Edit], w: Workflow) -> Workflow:
    """Apply an edit script; paths address the normalized tree with a promoted root."""
    root: WorkflowNode = Sequence(child_list(normalize_node(w.root)))
    for edit in script:
        root = _apply_one(root, edit)
    return w.replace(root=normalize_node(root))


# --- subflow matching --------------------------------------------------------


def find_subflows(w: Workflow, library: list[Workflow]) -> list[tuple[int, Path]]:
    """Locate library patterns as contiguous task runs inside flatten(w).

    A pattern matches on its tool_id sequence.  Results are
    (pattern_index, path-of-first-task) sorted lexicographically.
    """
    flat_root = flatten_node(w.root)
    sites: list[tuple[Path, tuple[WorkflowNode, ...]]] = []

    def collect(node: WorkflowNode, path: Path) -> None:
        kids = child_list(node)
        sites.append((path, kids))
        for i, child in enumerate(kids):
            if isinstance(child, Branch):
                collect(child.then, path + (i, 0))
                if child.orelse is not None:
                    collect(child.orelse, path + (i, 1))

    collect(flat_root, ())
    matches: list[tuple[int, Path]] = []
    for p_idx, pattern in enumerate(library):
        tools = tuple(t.tool_id for t in task_order(pattern.root))
        width = len(tools)
        if width == 0:
            continue
        for site_path, kids in sites:
            for start in range(len(kids) - width + 1):
                window = kids[start : start + width]
                if all(isinstance(k, TaskNode) for k in window) and tuple(
                    k.tool_id for k in window
                ) == tools:
                    matches.append((p_idx, site_path + (start,)))
    matches.sort()
    return matches


# --- auxiliary structural measures -------------------------------------------


def dead_node_ratio(w: Workflow) -> float:
    """Share of tasks not backward-reachable from the declared outputs."""
    tasks = task_order(w.root)
    if not tasks:
        return 0.0
    need = set(w.declared_outputs)
    dead = 0
    for task in reversed(tasks):
        outs = set(task.output_schema)
        if outs & need:
            need = (need - outs) | set(task.input_schema)
        else:
            dead += 1
    return dead / len(tasks)


def shape_signature(w: Workflow) -> tuple[str, tuple[str, ...]]:
    """Flattened tree skeleton plus tool multiset; Nest boundaries are ignored."""

    def skeleton(node: WorkflowNode) -> str:
        if isinstance(node, TaskNode):
            return "t"
        if isinstance(node, Sequence):
            return "(" + "".join(skeleton(c) for c in node.children) + ")"
        if isinstance(node, Branch):
            alt = skeleton(node.orelse) if node.orelse is not None else "-"
            return "[" + skeleton(node.then) + "|" + alt + "]"
        return skeleton(node.body)

    flat = flatten_node(w.root)
    tools = tuple(sorted(t.tool_id for t in task_order(flat)))
    return skeleton(flat), tools


# --- serialization -----------------------------------------------------------


def node_to_doc(node: WorkflowNode) -> dict:
    if isinstance(node, TaskNode):
        return {
            "kind": "task",
            "tool_id": node.tool_id,
            "input_schema": sorted(node.input_schema),
            "output_schema": sorted(node.output_schema),
            "params": {k: v for k, v in node.params},
        }
    if isinstance(node, Sequence):
        return {"kind": "seq", "children": [node_to_doc(c) for c in node.children]}
    if isinstance(node, Branch):
        return {
            "kind": "branch",
            "cond": {"key": node.cond.key, "op": node.cond.op, "value": node.cond.value},
            "then": node_to_doc(node.then),
            "else": node_to_doc(node.orelse) if node.orelse is not None else None,
        }
    return {"kind": "nest", "sub_goal_id": node.sub_goal_id, "body": node_to_doc(node.body)}


def node_from_doc(doc: dict) -> WorkflowNode:
    kind = doc.get("kind")
    if kind == "task":
        return TaskNode(
            tool_id=doc["tool_id"],
            input_schema=frozenset(doc.get("input_schema", ())),
            output_schema=frozenset(doc.get("output_schema", ())),
            params=tuple(sorted(doc.get("params", {}).items())),
        )
    if kind == "seq":
        return Sequence(tuple(node_from_doc(c) for c in doc["children"]))
    if kind == "branch":
        cond = doc["cond"]
        orelse = doc.get("else")
        return Branch(
            Predicate(cond["key"], cond["op"], cond.get("value")),
            node_from_doc(doc["then"]),
            node_from_doc(orelse) if orelse is not None else None,
        )
    if kind == "nest":
        return Nest(doc["sub_goal_id"], node_from_doc(doc["body"]))
    raise ValueError(f"unknown node kind {kind!r}")


def to_doc(w: Workflow) -> dict:
    return {
        "id": w.id,
        "goal_id": w.goal_id,
        "declared_inputs": sorted(w.declared_inputs),
        "declared_outputs": sorted(w.declared_outputs),
        "root": node_to_doc(w.root),
    }


def from_doc(doc: dict) -> Workflow:
    return Workflow(
        root=node_from_doc(doc["root"]),
        declared_inputs=frozenset(doc.get("declared_inputs", ())),
        declared_outputs=frozenset(doc.get("declared_outputs", ())),
        id=doc.get("id", ""),
        goal_id=doc.get("goal_id", ""),
    )


def canonical_json(obj: object) -> str:
    """Sorted keys, no insignificant whitespace: byte-stable for equal values."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dumps(w: Workflow) -> str:
    return canonical_json(to_doc(w))


def loads(text: str) -> Workflow:
    return from_doc(json.loads(text))
