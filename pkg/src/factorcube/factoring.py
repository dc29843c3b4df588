"""Evaluation trees: construction heuristics, numeric evaluation, stats.

An evaluation tree is a binary tree over the query's factors.  Each
internal node multiplies its two children over the union of their
variables and immediately sums out every variable that no other pending
factor (and no later tree node) still needs, query variable excepted.
The root is therefore always left holding exactly the query variable.

Two greedy builders pick, at every step, the factor pair with the lowest
cost key: `build_set_factoring` keys on sequential work (multiply count,
then result size), `build_set_factoring_c` keys on the modeled parallel
run time of the candidate product.  `build_chain_baseline` is the
worst-case comparator that just folds factors left to right.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, costmodel, network
from .factors import DimensionCapError, Factor, marginalize_out, normalize

TREE_FORMAT = "factorcube-tree-v1"

DEFAULT_EVAL_CAP = 25

HEURISTICS = ("set-factoring", "set-factoring-c", "chain")


@dataclass(frozen=True)
class EvalNode:
    """Leaf (factor set, children None) or product node (factor None)."""

    factor: int | None
    left: int | None
    right: int | None
    sum_out: tuple[int, ...]
    scope: tuple[int, ...]

    @property
    def is_leaf(self) -> bool:
        return self.factor is not None


@dataclass(frozen=True)
class EvalTree:
    query_var: int
    var_cards: tuple[tuple[int, int], ...]  # (variable id, cardinality), sorted
    nodes: tuple[EvalNode, ...]  # leaves first, products in creation order
    root: int

    def card_map(self) -> dict[int, int]:
        return dict(self.var_cards)

    @property
    def leaf_count(self) -> int:
        return sum(1 for n in self.nodes if n.is_leaf)

    @property
    def cp_count(self) -> int:
        return len(self.nodes) - self.leaf_count


@dataclass(frozen=True)
class CpShape:
    """Variable-level description of one conformal product."""

    vars1: tuple[int, ...]
    vars2: tuple[int, ...]
    union_vars: tuple[int, ...]
    result_vars: tuple[int, ...]
    cards: tuple[int, ...]  # aligned with union_vars

    def _prod(self, vs) -> int:
        by_var = dict(zip(self.union_vars, self.cards))
        return math.prod(by_var[v] for v in vs)

    @property
    def sum_out(self) -> tuple[int, ...]:
        result = set(self.result_vars)
        return tuple(v for v in self.union_vars if v not in result)

    @property
    def d1(self) -> int:
        return len(self.vars1)

    @property
    def d2(self) -> int:
        return len(self.vars2)

    @property
    def u(self) -> int:
        return len(self.union_vars)

    @property
    def r(self) -> int:
        return len(self.result_vars)

    @property
    def multiply_count(self) -> int:
        return self._prod(self.union_vars)

    @property
    def size1(self) -> int:
        return self._prod(self.vars1)

    @property
    def size2(self) -> int:
        return self._prod(self.vars2)

    @property
    def result_size(self) -> int:
        return self._prod(self.result_vars)


@dataclass(frozen=True)
class TreeStats:
    shapes: tuple[CpShape, ...]  # creation order; last one is the root
    dm: int
    md: int
    md_all: int
    cp_count: int

    @property
    def dd(self) -> float:
        return (self.dm - self.md) / self.dm if self.dm > 0 else 0.0


def scopes_for_query(net, query) -> tuple[list[tuple[int, ...]], dict[int, int], list[int]]:
    """Factor scopes for a query: one scope per relevant variable, with the
    observed variables sliced away.  Returns (scopes, cards, relevant_ids)."""
    relevant = sorted(network.relevant_factors(net, query))
    scopes = []
    for v in relevant:
        scope = tuple(
            w
            for w in sorted({v, *net.parents[v]})
            if w not in query.evidence
        )
        scopes.append(scope)
    cards = {
        v: net.variables[v].cardinality
        for scope in scopes
        for v in scope
    }
    cards.setdefault(query.query_var, net.variables[query.query_var].cardinality)
    return scopes, cards, relevant


def _check_instance(scopes, cards, query_var) -> None:
    if not scopes:
        raise ValueError("at least one factor is required")
    if not any(query_var in s for s in scopes):
        raise ValueError(f"query variable {query_var} appears in no factor")
    for s in scopes:
        for v in s:
            if v not in cards:
                raise ValueError(f"no cardinality given for variable {v}")


class _BuildState:
    """Active factor multiset during a greedy build."""

    def __init__(self, scopes, cards, query_var):
        self.cards = dict(cards)
        self.query_var = query_var
        self.nodes: list[EvalNode] = [
            EvalNode(i, None, None, (), tuple(s)) for i, s in enumerate(scopes)
        ]
        self.active: list[int] = list(range(len(scopes)))  # node ids
        self.use_count: dict[int, int] = {}
        for s in scopes:
            for v in s:
                self.use_count[v] = self.use_count.get(v, 0) + 1
        self.binary = all(c == 2 for c in self.cards.values())
        self.columns = sorted(
            set(self.use_count) | {query_var}
        )  # dense kernel axis
        self.col_of = {v: i for i, v in enumerate(self.columns)}

    def kernel_views(self):
        k = len(self.active)
        n = len(self.columns)
        present = np.zeros((k, n), dtype=np.int64)
        sizes = np.zeros(k, dtype=np.int64)
        for row, nid in enumerate(self.active):
            scope = self.nodes[nid].scope
            sizes[row] = len(scope)
            for v in scope:
                present[row, self.col_of[v]] = 1
        cnt = np.zeros(n, dtype=np.int64)
        for v, c in self.use_count.items():
            cnt[self.col_of[v]] = c
        return present, cnt, sizes, self.col_of[self.query_var]

    def candidate_shape(self, a: int, b: int) -> CpShape:
        """Shape of the product of active rows a and b under the eager
        summation rule (variables no other active factor needs die here)."""
        s1 = self.nodes[self.active[a]].scope
        s2 = self.nodes[self.active[b]].scope
        union = tuple(sorted(set(s1) | set(s2)))
        in1 = set(s1)
        in2 = set(s2)
        result = tuple(
            v
            for v in union
            if v == self.query_var
            or self.use_count[v] - (v in in1) - (v in in2) > 0
        )
        return CpShape(
            s1, s2, union, result, tuple(self.cards[v] for v in union)
        )

    def combine(self, a: int, b: int) -> None:
        """Replace active rows a and b by their product node (a = left)."""
        shape = self.candidate_shape(a, b)
        nid_a = self.active[a]
        nid_b = self.active[b]
        node = EvalNode(None, nid_a, nid_b, shape.sum_out, shape.result_vars)
        self.nodes.append(node)
        new_id = len(self.nodes) - 1
        del self.active[max(a, b)]
        del self.active[min(a, b)]
        self.active.append(new_id)
        for v in shape.union_vars:
            self.use_count[v] -= (v in set(shape.vars1)) + (v in set(shape.vars2))
        for v in shape.result_vars:
            self.use_count[v] += 1

    def finish(self) -> EvalTree:
        root = self.active[0]
        return EvalTree(
            self.query_var,
            tuple((v, self.cards[v]) for v in self.columns),
            tuple(self.nodes),
            root,
        )


def _select_exact_work(state: _BuildState) -> tuple[int, int]:
    """Reference pair choice with exact integer keys (any cardinalities)."""
    best = None
    best_key = None
    k = len(state.active)
    for a in range(k):
        for b in range(a + 1, k):
            shape = state.candidate_shape(a, b)
            key = (shape.multiply_count, shape.result_size)
            if best_key is None or key < best_key:
                best_key = key
                best = (a, b)
    return best


def _select_exact_time(state: _BuildState, machine) -> tuple[int, int]:
    best = None
    best_key = None
    k = len(state.active)
    for a in range(k):
        for b in range(a + 1, k):
            shape = state.candidate_shape(a, b)
            cost = costmodel.parallel_cp_cost(shape, machine)
            key = (cost.t_p, shape.result_size)
            if best_key is None or key < best_key:
                best_key = key
                best = (a, b)
    return best


def build_set_factoring(scopes, cards, query_var) -> EvalTree:
    """Greedy tree keyed on sequential work: repeatedly multiply the pair
    with the fewest multiplies, breaking ties by result size, then by pair
    position."""
    _check_instance(scopes, cards, query_var)
    state = _BuildState(scopes, cards, query_var)
    while len(state.active) > 1:
        if state.binary:
            present, cnt, _, qcol = state.kernel_views()
            a, b = _kernels.select_pair_work(present, cnt, qcol)
        else:
            a, b = _select_exact_work(state)
        state.combine(a, b)
    return state.finish()


def build_set_factoring_c(scopes, cards, query_var, machine) -> EvalTree:
    """Same greedy loop keyed on the modeled parallel run time of each
    candidate product under the broadcast-compute-aggregate machine."""
    _check_instance(scopes, cards, query_var)
    state = _BuildState(scopes, cards, query_var)
    scalars = _kernels.machine_scalars(machine)
    while len(state.active) > 1:
        if state.binary:
            present, cnt, sizes, qcol = state.kernel_views()
            a, b = _kernels.select_pair_time(present, cnt, sizes, qcol, scalars)
        else:
            a, b = _select_exact_time(state, machine)
        state.combine(a, b)
    return state.finish()


def build_chain_baseline(scopes, cards, query_var) -> EvalTree:
    """Left-deep chain in input order; same eager summation rule."""
    _check_instance(scopes, cards, query_var)
    state = _BuildState(scopes, cards, query_var)
    if len(state.active) > 1:
        state.combine(0, 1)
    while len(state.active) > 1:
        # running product stays on the left, next input factor on the right
        state.combine(len(state.active) - 1, 0)
    return state.finish()


def build_tree(heuristic: str, scopes, cards, query_var, machine=None) -> EvalTree:
    if heuristic == "set-factoring":
        return build_set_factoring(scopes, cards, query_var)
    if heuristic == "set-factoring-c":
        return build_set_factoring_c(
            scopes, cards, query_var, machine or costmodel.DEFAULT_MACHINE
        )
    if heuristic == "chain":
        return build_chain_baseline(scopes, cards, query_var)
    raise ValueError(f"unknown heuristic {heuristic!r}")


def tree_stats(tree: EvalTree) -> TreeStats:
    """Per-product shapes plus the dimension summary.

    dm is the largest product dimension in the tree; md is max(d1, d2, r)
    at a product of that dimension (largest such value if several products
    tie); md_all is the same maximum taken over every product.
    """
    cards = tree.card_map()
    shapes = []
    for node in tree.nodes:
        if node.is_leaf:
            continue
        s1 = tree.nodes[node.left].scope
        s2 = tree.nodes[node.right].scope
        union = tuple(sorted(set(s1) | set(s2)))
        shapes.append(
            CpShape(s1, s2, union, node.scope, tuple(cards[v] for v in union))
        )
    dm = 0
    md = 0
    md_all = 0
    for sh in shapes:
        node_md = max(sh.d1, sh.d2, sh.r)
        md_all = max(md_all, node_md)
        if sh.u > dm:
            dm = sh.u
            md = node_md
        elif sh.u == dm:
            md = max(md, node_md)
    return TreeStats(tuple(shapes), dm, md, md_all, len(shapes))


def check_tree(tree: EvalTree) -> None:
    """Raise if the tree breaks a structural invariant: every non-query
    variable summed exactly once, query never summed, root scope == query,
    every factor used in exactly one leaf."""
    summed: dict[int, int] = {}
    used_factors: dict[int, int] = {}
    for node in tree.nodes:
        if node.is_leaf:
            used_factors[node.factor] = used_factors.get(node.factor, 0) + 1
        for v in node.sum_out:
            summed[v] = summed.get(v, 0) + 1
    if tree.query_var in summed:
        raise AssertionError("query variable was summed out")
    if any(c != 1 for c in used_factors.values()):
        raise AssertionError("a factor appears in more than one leaf")
    root_scope = tree.nodes[tree.root].scope
    if tree.cp_count > 0 and root_scope != (tree.query_var,):
        raise AssertionError(f"root scope {root_scope} != query variable")
    leaf_vars = set()
    for node in tree.nodes:
        if node.is_leaf:
            leaf_vars.update(node.scope)
    for v in leaf_vars:
        if v == tree.query_var:
            continue
        times = summed.get(v, 0)
        if tree.cp_count > 0 and times != 1:
            raise AssertionError(f"variable {v} summed {times} times")


def evaluate_tree(
    tree: EvalTree, factors: list[Factor], max_dim: int = DEFAULT_EVAL_CAP
) -> Factor:
    """Run the tree numerically and return the normalized query posterior.

    `factors` is indexed by the leaves' factor numbers.  Refuses products
    whose union dimension exceeds `max_dim` variables.
    """
    cards = tree.card_map()
    tables: dict[int, np.ndarray] = {}
    for idx, node in enumerate(tree.nodes):
        if not node.is_leaf:
            continue
        f = factors[node.factor]
        if f.vars != node.scope:
            raise ValueError(
                f"factor {node.factor} covers {f.vars}, leaf expects {node.scope}"
            )
        tables[idx] = f.table
    for idx, node in enumerate(tree.nodes):
        if node.is_leaf:
            continue
        v1 = tree.nodes[node.left].scope
        v2 = tree.nodes[node.right].scope
        union = tuple(sorted(set(v1) | set(v2)))
        if len(union) > max_dim:
            raise DimensionCapError(
                f"conformal product spans {len(union)} variables, "
                f"above the cap of {max_dim}"
            )
        tables[idx] = _kernels.product_sum(
            tables[node.left],
            v1,
            tables[node.right],
            v2,
            union,
            tuple(cards[v] for v in union),
            node.scope,
        )
        tables.pop(node.left)
        tables.pop(node.right)
    root = tree.nodes[tree.root]
    out = Factor(
        root.scope, tuple(cards[v] for v in root.scope), tables[tree.root]
    )
    if out.vars != (tree.query_var,):
        out = marginalize_out(out, set(out.vars) - {tree.query_var})
    return normalize(out)


def posterior(net, query, heuristic: str = "set-factoring",
              machine=None, max_dim: int = DEFAULT_EVAL_CAP) -> Factor:
    """End-to-end numeric answer: prune, condition, build, evaluate."""
    from .factors import query_factors

    scopes, cards, _ = scopes_for_query(net, query)
    tree = build_tree(heuristic, scopes, cards, query.query_var, machine)
    return evaluate_tree(tree, query_factors(net, query), max_dim=max_dim)


def _tree_to_obj(tree: EvalTree) -> dict:
    nodes = []
    for n in tree.nodes:
        if n.is_leaf:
            nodes.append({"factor": n.factor, "scope": list(n.scope)})
        else:
            nodes.append(
                {
                    "left": n.left,
                    "right": n.right,
                    "sum_out": list(n.sum_out),
                    "scope": list(n.scope),
                }
            )
    return {
        "format": TREE_FORMAT,
        "query_var": tree.query_var,
        "vars": [list(vc) for vc in tree.var_cards],
        "root": tree.root,
        "nodes": nodes,
    }


def save_tree(tree: EvalTree, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_tree_to_obj(tree), fh, indent=1)
        fh.write("\n")


def load_tree(path) -> EvalTree:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise network.NetFormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        nodes = []
        for rec in obj["nodes"]:
            if "factor" in rec:
                nodes.append(
                    EvalNode(int(rec["factor"]), None, None, (), tuple(rec["scope"]))
                )
            else:
                nodes.append(
                    EvalNode(
                        None,
                        int(rec["left"]),
                        int(rec["right"]),
                        tuple(rec["sum_out"]),
                        tuple(rec["scope"]),
                    )
                )
        tree = EvalTree(
            int(obj["query_var"]),
            tuple((int(v), int(c)) for v, c in obj["vars"]),
            tuple(nodes),
            int(obj["root"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise network.NetFormatError(f"{path}: malformed tree file ({exc})") from exc
    return tree
