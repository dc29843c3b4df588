"""Belief networks: representation, validation, pruning, generation, files.

A net is a DAG of discrete variables, each carrying a dense conditional
probability table given its parents.  CPT layout: one row per parent
assignment (parents in stored order, last parent fastest), child value
fastest within the row.

The file format is a single JSON document holding the variables, parent
lists, CPTs, and the attached query (query variable plus evidence pairs).
Probabilities are written with shortest round-trip precision, so a
save/load cycle reproduces every table bit for bit.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

NET_FORMAT = "factorcube-net-v1"

ROW_SUM_TOL = 1e-9

# Dense CPTs grow as 2^(in-degree); this cap keeps a single table at or
# below 2^17 entries while leaving the realized arc totals untouched.
MAX_IN_DEGREE = 16


class NetFormatError(ValueError):
    """A net file is structurally malformed."""


class NetValidationError(ValueError):
    """A net file parsed but violates net invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


class GenerationError(ValueError):
    """Random-net parameters are empty or infeasible."""


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    cardinality: int


@dataclass(frozen=True)
class QuerySpec:
    query_var: int
    evidence: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class BeliefNet:
    variables: tuple[Variable, ...]
    parents: tuple[tuple[int, ...], ...]
    cpts: tuple[np.ndarray, ...]

    def __post_init__(self):
        frozen = []
        for t in self.cpts:
            t = np.ascontiguousarray(t, dtype=np.float64)
            t.setflags(write=False)
            frozen.append(t)
        object.__setattr__(self, "cpts", tuple(frozen))

    @property
    def node_count(self) -> int:
        return len(self.variables)

    @property
    def arc_count(self) -> int:
        return sum(len(p) for p in self.parents)

    def avg_in_arcs(self) -> float:
        return self.arc_count / self.node_count


@dataclass(frozen=True)
class NetGenParams:
    """Generator constraints: closed ranges plus the seed."""

    node_count_range: tuple[int, int] = (10, 100)
    avg_arcs_range: tuple[float, float] = (1.0, 5.0)
    obs_count_range: tuple[int, int] = (1, 20)
    seed: int = 0


@dataclass(frozen=True)
class Violation:
    kind: str
    var_id: int | None
    message: str


def _expected_cpt_len(net: BeliefNet, v: int) -> int:
    size = net.variables[v].cardinality
    for p in net.parents[v]:
        size *= net.variables[p].cardinality
    return size


def topological_order(parents) -> list[int] | None:
    """Topo order of 0..n-1 under the parent relation, or None on a cycle."""
    n = len(parents)
    remaining_parents = [len(set(ps)) for ps in parents]
    children: list[list[int]] = [[] for _ in range(n)]
    for v, ps in enumerate(parents):
        for p in set(ps):
            if 0 <= p < n:
                children[p].append(v)
    ready = [v for v in range(n) if remaining_parents[v] == 0]
    order = []
    while ready:
        v = ready.pop()
        order.append(v)
        for c in children[v]:
            remaining_parents[c] -= 1
            if remaining_parents[c] == 0:
                ready.append(c)
    return order if len(order) == n else None


def validate(net: BeliefNet) -> list[Violation]:
    """Check every net invariant; an empty report means the net is valid."""
    out: list[Violation] = []
    n = net.node_count
    seen = set()
    for i, var in enumerate(net.variables):
        if var.id != i:
            out.append(
                Violation("id-dense", var.id, f"variable at slot {i} has id {var.id}")
            )
        if var.id in seen:
            out.append(Violation("id-duplicate", var.id, f"duplicate id {var.id}"))
        seen.add(var.id)
        if var.cardinality < 2:
            out.append(
                Violation(
                    "cardinality",
                    var.id,
                    f"variable {var.id} has cardinality {var.cardinality} < 2",
                )
            )
    for v, ps in enumerate(net.parents):
        for p in ps:
            if not 0 <= p < n:
                out.append(
                    Violation(
                        "parent-unknown", v, f"variable {v} lists unknown parent {p}"
                    )
                )
        if len(set(ps)) != len(ps):
            out.append(
                Violation("parent-duplicate", v, f"variable {v} repeats a parent")
            )
    if any(o.kind == "parent-unknown" for o in out):
        return out
    if topological_order(net.parents) is None:
        out.append(Violation("cycle", None, "parent relation contains a cycle"))
    for v in range(n):
        want = _expected_cpt_len(net, v)
        got = net.cpts[v].size
        if got != want:
            out.append(
                Violation(
                    "cpt-size",
                    v,
                    f"variable {v} has a CPT of {got} entries, expected {want}",
                )
            )
            continue
        card = net.variables[v].cardinality
        rows = net.cpts[v].reshape(-1, card)
        if not np.all(np.isfinite(rows)) or np.any(rows < 0):
            out.append(
                Violation(
                    "prob-range", v, f"variable {v} has a negative or non-finite entry"
                )
            )
            continue
        bad = np.nonzero(np.abs(rows.sum(axis=1) - 1.0) > ROW_SUM_TOL)[0]
        for r in bad:
            out.append(
                Violation(
                    "row-sum",
                    v,
                    f"variable {v} CPT row {int(r)} sums to {rows[r].sum()!r}",
                )
            )
    return out


def validate_query(net: BeliefNet, query: QuerySpec) -> list[Violation]:
    out: list[Violation] = []
    n = net.node_count
    if not 0 <= query.query_var < n:
        out.append(
            Violation("query-unknown", query.query_var, "query variable not in net")
        )
    if query.query_var in query.evidence:
        out.append(
            Violation("query-observed", query.query_var, "query variable is observed")
        )
    for v, val in query.evidence.items():
        if not 0 <= v < n:
            out.append(Violation("evidence-unknown", v, f"evidence on unknown {v}"))
        elif not 0 <= val < net.variables[v].cardinality:
            out.append(
                Violation(
                    "evidence-range",
                    v,
                    f"evidence value {val} out of range for variable {v}",
                )
            )
    return out


def relevant_factors(net: BeliefNet, query: QuerySpec) -> set[int]:
    """Ids whose CPTs can influence the query: the ancestral closure of the
    query variable and the evidence variables (barren nodes drop out)."""
    todo = [query.query_var, *query.evidence]
    closure: set[int] = set()
    while todo:
        v = todo.pop()
        if v in closure:
            continue
        closure.add(v)
        todo.extend(net.parents[v])
    return closure


def _arc_capacity(n: int) -> int:
    """Distinct arcs available once each node's in-degree is capped."""
    return sum(min(i, MAX_IN_DEGREE) for i in range(n))


def _draw_arc_slots(rng, n: int, target_avg: float, t_lo: int, t_hi: int):
    """Parent sets by topological position.

    Each node draws an in-degree with expectation `target_avg` (clipped by
    its predecessor count and MAX_IN_DEGREE) and uniform parents among its
    predecessors; single arcs are then added or removed at random until the
    total lands in [t_lo, t_hi], so the realized average is in range by
    construction.  Requires t_lo <= _arc_capacity(n).
    """
    caps = [min(i, MAX_IN_DEGREE) for i in range(n)]
    chosen: list[set[int]] = [set() for _ in range(n)]
    for i in range(1, n):
        p = min(1.0, target_avg / caps[i])
        k = int(rng.binomial(caps[i], p))
        for j in rng.choice(i, size=k, replace=False):
            chosen[i].add(int(j))
    total = sum(len(c) for c in chosen)
    while total > t_hi:
        arcs = [(j, i) for i in range(n) for j in sorted(chosen[i])]
        j, i = arcs[int(rng.integers(0, len(arcs)))]
        chosen[i].discard(j)
        total -= 1
    while total < t_lo:
        free = [
            (j, i)
            for i in range(n)
            if len(chosen[i]) < caps[i]
            for j in range(i)
            if j not in chosen[i]
        ]
        j, i = free[int(rng.integers(0, len(free)))]
        chosen[i].add(j)
        total += 1
    return [sorted(c) for c in chosen]


def random_net(params: NetGenParams) -> tuple[BeliefNet, QuerySpec]:
    """Deterministic random net and query for the given params.

    Node count, observation count, and total arc count are drawn uniformly
    from their (feasibility-clipped) ranges, so the realized statistics land
    inside the requested ranges by construction.  Arcs are a uniform subset
    of the pairs consistent with a random topological order; every variable
    is binary; CPT rows are uniform draws renormalized to one.
    """
    n_lo, n_hi = params.node_count_range
    a_lo, a_hi = params.avg_arcs_range
    o_lo, o_hi = params.obs_count_range
    if n_lo > n_hi or a_lo > a_hi or o_lo > o_hi:
        raise GenerationError(
            f"empty range: nodes {params.node_count_range}, "
            f"arcs {params.avg_arcs_range}, obs {params.obs_count_range}"
        )
    if n_lo < 1 or a_lo < 0 or o_lo < 0:
        raise GenerationError("ranges must be non-negative (nodes >= 1)")
    rng = np.random.default_rng(params.seed)
    n = int(rng.integers(n_lo, n_hi + 1))

    max_arcs = _arc_capacity(n)
    t_lo = math.ceil(a_lo * n)
    t_hi = min(math.floor(a_hi * n), max_arcs)
    if t_lo > max_arcs:
        raise GenerationError(
            f"average in-arcs {a_lo} infeasible for {n} nodes "
            f"(at most {max_arcs / n:.2f} per node)"
        )
    if t_lo > t_hi:
        # No achievable total lies inside the range; take the closest one.
        t_lo = t_hi = min(max_arcs, round(((a_lo + a_hi) / 2) * n))
    target_avg = float(rng.uniform(a_lo, a_hi))

    obs_hi = min(o_hi, n - 1)
    if o_lo > obs_hi:
        raise GenerationError(
            f"observation count {o_lo} infeasible for {n} nodes "
            "(at least one variable must stay unobserved)"
        )
    obs_count = int(rng.integers(o_lo, obs_hi + 1))

    # Positions 0..n-1 form the topological order; shuffle the id labels.
    label = rng.permutation(n)
    parents_by_pos = _draw_arc_slots(rng, n, target_avg, t_lo, t_hi)

    parents: list[tuple[int, ...]] = [()] * n
    for pos in range(n):
        vid = int(label[pos])
        parents[vid] = tuple(sorted(int(label[p]) for p in parents_by_pos[pos]))

    variables = tuple(Variable(i, f"n{i}", 2) for i in range(n))
    cpts = []
    for v in range(n):
        rows = 2 ** len(parents[v])
        raw = rng.random((rows, 2))
        raw /= raw.sum(axis=1, keepdims=True)
        cpts.append(raw.ravel())
    net = BeliefNet(variables, tuple(parents), tuple(cpts))

    observed = [int(x) for x in rng.choice(n, size=obs_count, replace=False)]
    evidence = {v: int(rng.integers(0, 2)) for v in sorted(observed)}
    unobserved = [v for v in range(n) if v not in evidence]
    query_var = int(unobserved[int(rng.integers(0, len(unobserved)))])
    return net, QuerySpec(query_var, evidence)


def _net_to_obj(net: BeliefNet, query: QuerySpec) -> dict:
    return {
        "format": NET_FORMAT,
        "variables": [
            {"id": v.id, "name": v.name, "cardinality": v.cardinality}
            for v in net.variables
        ],
        "parents": [list(p) for p in net.parents],
        "cpts": [t.tolist() for t in net.cpts],
        "query": query.query_var,
        "evidence": [[v, query.evidence[v]] for v in sorted(query.evidence)],
    }


def save_net(net: BeliefNet, query: QuerySpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_net_to_obj(net, query), fh, indent=1)
        fh.write("\n")


def _require(obj, key, types, where):
    if key not in obj:
        raise NetFormatError(f"{where}: missing field {key!r}")
    val = obj[key]
    if not isinstance(val, types):
        raise NetFormatError(f"{where}: field {key!r} has wrong type")
    return val


def load_net(path) -> tuple[BeliefNet, QuerySpec]:
    """Parse and validate a net file.

    Raises NetFormatError for malformed documents and NetValidationError
    (carrying the violation report) for well-formed but invalid nets.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise NetFormatError(f"{path}: top level must be an object")
    variables = []
    for i, rec in enumerate(_require(obj, "variables", list, path)):
        if not isinstance(rec, dict):
            raise NetFormatError(f"{path}: variables[{i}] must be an object")
        variables.append(
            Variable(
                int(_require(rec, "id", int, f"variables[{i}]")),
                str(_require(rec, "name", str, f"variables[{i}]")),
                int(_require(rec, "cardinality", int, f"variables[{i}]")),
            )
        )
    parents_raw = _require(obj, "parents", list, path)
    cpts_raw = _require(obj, "cpts", list, path)
    if len(parents_raw) != len(variables) or len(cpts_raw) != len(variables):
        raise NetFormatError(
            f"{path}: variables, parents, and cpts must have equal length"
        )
    parents = tuple(
        tuple(int(p) for p in ps) if isinstance(ps, list) else _bad_parents(path, i)
        for i, ps in enumerate(parents_raw)
    )
    try:
        cpts = tuple(np.asarray(t, dtype=np.float64).ravel() for t in cpts_raw)
    except (TypeError, ValueError) as exc:
        raise NetFormatError(f"{path}: cpts must be flat numeric arrays") from exc
    net = BeliefNet(tuple(variables), parents, cpts)

    qvar = _require(obj, "query", int, path)
    evidence = {}
    for i, pair in enumerate(_require(obj, "evidence", list, path)):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise NetFormatError(f"{path}: evidence[{i}] must be a [var, value] pair")
        evidence[int(pair[0])] = int(pair[1])
    query = QuerySpec(int(qvar), evidence)

    report = validate(net) + validate_query(net, query)
    if report:
        raise NetValidationError(report)
    return net, query


def _bad_parents(path, i):
    raise NetFormatError(f"{path}: parents[{i}] must be a list of variable ids")
