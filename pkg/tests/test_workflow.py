import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowsmith import workflow as wf
from flowsmith.errors import BadPath, InvalidWorkflow

from .conftest import (
    chain_flow,
    chain_tasks,
    corpus_flows,
    mk_flow,
    mk_task,
    oracle_metrics,
    oracle_task_tools,
    oracle_validate,
    prune_branches,
    random_flow,
)


# --- construction invariants -----------------------------------------------------


def test_task_requires_tool_id():
    with pytest.raises(ValueError):
        mk_task("")


def test_predicate_value_rules():
    wf.Predicate("k", "equals", 3)
    wf.Predicate("k", "exists")
    with pytest.raises(ValueError):
        wf.Predicate("k", "equals")
    with pytest.raises(ValueError):
        wf.Predicate("k", "exists", 1)
    with pytest.raises(ValueError):
        wf.Predicate("k", "between", 1)


# --- validate ---------------------------------------------------------------------


def test_validate_single_task_within_declared_inputs():
    flow = mk_flow(mk_task("a", {"x"}, {"y"}), ins={"x"})
    assert wf.validate(flow).ok


def test_validate_flags_unbound_input():
    a = mk_task("a", {"x"}, {"y"})
    b = mk_task("b", {"z"}, {"w"})  # z neither declared nor produced by a
    report = wf.validate(mk_flow([a, b], ins={"x"}))
    assert not report.ok
    assert any("unbound input" in v for v in report.violations)


def test_validate_branch_arms_checked_independently():
    a = mk_task("a", {"x"}, {"y"})
    arm = mk_task("c", {"y"}, {"q"})  # sees the scope from before the branch
    flow = mk_flow([a, wf.Branch(wf.Predicate("x", "exists"), arm, None)], ins={"x"})
    assert wf.validate(flow).ok


def test_validate_nest_inherits_scope():
    a = mk_task("a", {"x"}, {"y"})
    inner = mk_task("b", {"y"}, {"z"})
    flow = mk_flow([a, wf.Nest("sub", inner)], ins={"x"})
    assert wf.validate(flow).ok


def test_validate_empty_sequence_only_at_root():
    assert wf.validate(mk_flow([])).ok  # the empty workflow
    bad = mk_flow([mk_task("a", (), {"y"}), wf.Sequence(())])
    assert not wf.validate(bad).ok


def test_validate_agrees_with_independent_oracle_on_random_flows():
    rng = random.Random(2024)
    for _ in range(300):
        flow = random_flow(rng)
        assert wf.validate(flow).ok == oracle_validate(flow)


def test_generated_corpus_flows_all_validate(small_corpus):
    # cross-check with the recursive-descent oracle, written first
    for record in small_corpus:
        assert oracle_validate(record.workflow)
        assert wf.validate(record.workflow).ok


# --- metrics ----------------------------------------------------------------------


def test_metrics_single_task():
    m = wf.metrics(mk_flow(mk_task("a", (), {"y"})))
    assert (m.length, m.depth, m.branch_count) == (1, 0, 0)


def test_metrics_nested_chain_counts_depth():
    inner = mk_task("a", (), {"y"})
    flow = mk_flow(wf.Nest("s1", wf.Nest("s2", inner)))
    m = wf.metrics(flow)
    assert (m.length, m.depth) == (1, 2)


def test_metrics_mixed_tree_hand_count():
    t = lambda name: mk_task(name, (), {name + "_o"})
    root = wf.Sequence((
        t("a"),
        wf.Branch(wf.Predicate("p", "exists"), t("b"), t("c")),
        wf.Nest("sub", wf.Sequence((t("d"), t("e")))),
    ))
    flow = wf.Workflow(root=root)
    m = wf.metrics(flow)
    assert (m.length, m.depth, m.branch_count) == (5, 1, 1)
    assert oracle_metrics(root) == (5, 1, 1)


def test_metrics_rejects_invalid_flow():
    bad = mk_flow(mk_task("a", {"missing"}, {"y"}))
    with pytest.raises(InvalidWorkflow):
        wf.metrics(bad)


def test_metrics_matches_oracle_on_random_flows():
    rng = random.Random(7)
    for _ in range(200):
        flow = random_flow(rng)
        m = wf.metrics(flow, check=False)
        assert (m.length, m.depth, m.branch_count) == oracle_metrics(flow.root)


# --- flatten ----------------------------------------------------------------------


def test_flatten_identity_on_flat_flow():
    flow = chain_flow([0, 1, 2])
    assert wf.flatten(flow).root == wf.normalize_node(flow.root)


def test_flatten_unwraps_single_nest():
    t1, t2 = chain_tasks([0, 1])
    flow = mk_flow(wf.Nest("sub", wf.Sequence((t1, t2))), ins={"seed"})
    assert wf.flatten(flow).root == wf.Sequence((t1, t2))


def test_flatten_idempotent_and_order_preserving_on_corpus_flows():
    for flow in corpus_flows(500, seed=31):
        once = wf.flatten(flow)
        twice = wf.flatten(once)
        assert once.root == twice.root
        assert wf.metrics(once, check=False).depth == 0
        assert oracle_task_tools(once.root) == oracle_task_tools(flow.root)


# --- concat -----------------------------------------------------------------------


def test_concat_empty_is_identity():
    flow = chain_flow([0, 1])
    empty = mk_flow([])
    assert wf.structurally_equal(wf.concat(flow, empty), flow)
    assert wf.structurally_equal(wf.concat(empty, flow), flow)


def test_concat_interface_rules():
    a = chain_flow([0])
    b = chain_flow([1])
    joined = wf.concat(a, b)
    assert joined.declared_inputs == a.declared_inputs
    assert joined.declared_outputs == a.declared_outputs | b.declared_outputs


def test_concat_length_additive_over_random_pairs():
    flows = corpus_flows(200, seed=77)
    rng = random.Random(9)
    for _ in range(1000):
        a, b = rng.choice(flows), rng.choice(flows)
        joined = wf.concat(a, b)
        got = wf.metrics(joined, check=False).length
        want = wf.metrics(a, check=False).length + wf.metrics(b, check=False).length
        assert got == want


def test_concat_associative_modulo_normalization():
    flows = corpus_flows(120, seed=78)
    rng = random.Random(10)
    for _ in range(400):
        a, b, c = rng.choice(flows), rng.choice(flows), rng.choice(flows)
        left = wf.concat(wf.concat(a, b), c)
        right = wf.concat(a, wf.concat(b, c))
        assert wf.structurally_equal(left, right)


# --- branch -----------------------------------------------------------------------


def test_branch_increments_branch_count_only():
    host = chain_flow([0, 1])
    alt = chain_flow([2])
    before = wf.metrics(host, check=False)
    guarded = wf.branch(host, wf.Predicate("nope", "exists"), alt)
    after = wf.metrics(guarded, check=False)
    assert after.branch_count == before.branch_count + 1
    assert after.depth == before.depth  # alt is flat


def test_branch_statically_false_prunes_to_host_order():
    host = chain_flow([0, 1])
    alt = chain_flow([2])
    cond = wf.Predicate("seed", "not_exists")  # seed is declared, so always false
    guarded = wf.branch(host, cond, alt)
    context = {name: True for name in guarded.declared_inputs}
    pruned = prune_branches(wf.flatten(guarded).root, context)
    assert oracle_task_tools(pruned) == oracle_task_tools(host.root)


def test_branch_preserves_main_path_and_interface():
    host = chain_flow([0, 1])
    guarded = wf.branch(host, wf.Predicate("seed", "exists"), chain_flow([3]))
    assert oracle_task_tools(guarded.root)[: 2] == oracle_task_tools(host.root)
    assert guarded.declared_outputs == host.declared_outputs


# --- nest -------------------------------------------------------------------------


def test_nest_at_root_adds_one_level():
    host = chain_flow([0, 1])
    nested = wf.nest(host, (), "sub", host)
    assert wf.metrics(nested, check=False).depth == 1


def test_nest_flatten_splice_oracle():
    host = chain_flow([0, 1, 2])
    body = chain_flow([5, 6])
    nested = wf.nest(host, (1,), "sub", body)
    got = oracle_task_tools(wf.flatten(nested).root)
    host_tools = oracle_task_tools(wf.flatten(host).root)
    want = host_tools[:1] + oracle_task_tools(body.root) + host_tools[2:]
    assert got == want


def test_nest_bad_path():
    host = chain_flow([0])
    with pytest.raises(BadPath):
        wf.nest(host, (4, 2), "sub", host)


def test_nest_depth_law_on_corpus_bodies():
    for body in corpus_flows(50, seed=55):
        host = chain_flow([0])
        nested = wf.nest(host, (), "sub", body)
        assert wf.metrics(nested, check=False).depth == wf.metrics(body, check=False).depth + 1


# --- serialization ------------------------------------------------------------------


def test_serialization_round_trip_bit_exact(small_corpus):
    for record in small_corpus:
        text = wf.dumps(record.workflow)
        back = wf.loads(text)
        assert back == record.workflow
        assert wf.dumps(back) == text


def test_serialization_canonical_writer_is_byte_stable():
    flow = chain_flow([3, 1], wid="w", gid="g")
    assert wf.dumps(flow) == wf.dumps(wf.loads(wf.dumps(flow)))


def test_branch_and_params_serialize():
    task = mk_task("a", {"x"}, {"y"}, params={"mode": "fast", "limit": 3})
    flow = mk_flow([task, wf.Branch(wf.Predicate("y", "equals", 1), mk_task("b", {"y"}, {"z"}), task)],
                   ins={"x"})
    assert wf.loads(wf.dumps(flow)) == flow


# --- normalization properties (hypothesis) -------------------------------------------


_tasks = st.integers(min_value=0, max_value=9).map(lambda k: chain_tasks([k])[0])


def _node_strategy():
    return st.recursive(
        _tasks,
        lambda inner: st.one_of(
            st.lists(inner, min_size=1, max_size=4).map(lambda xs: wf.Sequence(tuple(xs))),
            inner.map(lambda n: wf.Nest("s", n)),
        ),
        max_leaves=8,
    )


@given(_node_strategy())
@settings(max_examples=200, deadline=None)
def test_normalize_is_idempotent_and_preserves_tasks(node):
    once = wf.normalize_node(node)
    assert wf.normalize_node(once) == once
    assert oracle_task_tools(once) == oracle_task_tools(node)


@given(_node_strategy(), _node_strategy())
@settings(max_examples=100, deadline=None)
def test_structural_equality_ignores_sequence_nesting(a, b):
    flow_a = wf.Workflow(root=wf.Sequence((a, b)))
    flow_b = wf.Workflow(root=wf.Sequence((wf.Sequence((a,)), wf.Sequence((b,)))))
    assert wf.structurally_equal(flow_a, flow_b)


@given(_node_strategy(), _node_strategy())
@settings(max_examples=150, deadline=None)
def test_structural_equality_agrees_with_independent_oracle(a, b):
    from .conftest import oracle_equal
    lib = wf.structurally_equal(wf.Workflow(root=a), wf.Workflow(root=b))
    assert lib == oracle_equal(a, b)
