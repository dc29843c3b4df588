"""Analytic cost models for conformal-product trees on hypercube machines.

Everything here is shape arithmetic: no factor values are touched.  The
sequential model charges a fixed scale factor per multiply.  The parallel
model is broadcast-compute-aggregate (BCA): a distinguished processor
slices the inputs along chosen result variables, ships a slice to each
worker over a log spanning tree, and collects the result slices the same
way.  A distributed-net variant keeps all data resident everywhere and
pays only to gather and rebroadcast each intermediate result.

Byte quantities are kept exact (integers or rationals) so the accounting
identities hold bit for bit; times are float64 microseconds.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

MACHINE_KEYS = (
    "alpha", "c_st", "c_b", "p_init", "s_setup", "b_buffer",
    "n_a", "g_min", "bytes_per_entry",
)


@dataclass(frozen=True)
class MachineParams:
    """Hypercube machine description (times in microseconds).

    alpha: cost per multiply-equivalent; c_st: per-message startup;
    c_b: per byte per link; p_init/s_setup/b_buffer: fixed overheads of a
    distributed product; n_a: processors available (a power of two);
    g_min: smallest worthwhile number of multiplies per processor;
    bytes_per_entry: bytes per table value.
    """

    alpha: float = 45.0
    c_st: float = 230.0
    c_b: float = 0.5
    p_init: float = 0.0
    s_setup: float = 0.0
    b_buffer: float = 0.0
    n_a: int = 1024
    g_min: int = 256
    bytes_per_entry: int = 4

    def __post_init__(self):
        numeric = (
            self.alpha, self.c_st, self.c_b,
            self.p_init, self.s_setup, self.b_buffer,
        )
        if any(x < 0 for x in numeric):
            raise ValueError("machine times must be non-negative")
        if self.n_a < 1 or self.n_a & (self.n_a - 1):
            raise ValueError(f"n_a must be a power of two, got {self.n_a}")
        if self.g_min < 0:
            raise ValueError("g_min must be non-negative")
        if self.bytes_per_entry < 1:
            raise ValueError("bytes_per_entry must be positive")


DEFAULT_MACHINE = MachineParams()


def machine_from_dict(obj: dict) -> MachineParams:
    unknown = set(obj) - set(MACHINE_KEYS)
    if unknown:
        raise ValueError(f"unknown machine keys: {sorted(unknown)}")
    kwargs = {}
    for key in ("alpha", "c_st", "c_b", "p_init", "s_setup", "b_buffer"):
        if key in obj:
            kwargs[key] = float(obj[key])
    for key in ("n_a", "g_min", "bytes_per_entry"):
        if key in obj:
            kwargs[key] = int(obj[key])
    return MachineParams(**kwargs)


def load_machine(path) -> MachineParams:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: machine config must be an object")
    return machine_from_dict(obj)


@dataclass(frozen=True)
class SplitPlan:
    """How one conformal product is spread over the cube.

    split_vars: result variables whose joint assignment indexes the
    processors; g: multiplies per processor; d_max: cube dimension used;
    b_d / b_r: bytes sent to / returned from each worker; b_total: bytes
    distributed overall.  Byte fields are exact rationals.
    """

    split_vars: tuple[int, ...]
    n_u: int
    g: Fraction
    d_max: int
    b_d: Fraction
    b_r: Fraction
    b_total: Fraction


@dataclass(frozen=True)
class CpCost:
    t_s: float
    t_p: float
    w: float
    c_d: float
    c_r: float
    n_u: int
    shape: object
    plan: SplitPlan


@dataclass(frozen=True)
class QueryCost:
    per_cp: tuple[CpCost, ...]
    t_s_query: float
    t_p_query: float
    n_u_query: int
    cm_total: float
    cp_total: float


@dataclass(frozen=True)
class LongestPath:
    cp_count: int
    seq_time: float
    par_time: float
    node_ids: tuple[int, ...] = field(default=())


def seq_cp_cost(shape, machine: MachineParams) -> float:
    """Sequential time: scale factor times one multiply per union entry."""
    return machine.alpha * shape.multiply_count


def plan_split(shape, machine: MachineParams) -> SplitPlan:
    """Largest power-of-two processor count obeying the machine size, the
    grainsize floor, and the result-table bound, plus the split variables.

    Split variables are drawn from the result variables: shared input
    variables first (they shrink both input slices), then input-exclusive
    ones taken from whichever input currently has the larger slice (ties
    favor the first input).
    """
    m = shape.multiply_count
    rsize = shape.result_size
    n_u = 1
    while (
        n_u * 2 <= machine.n_a
        and n_u * 2 <= rsize
        and m >= (n_u * 2) * machine.g_min
    ):
        n_u *= 2
    if n_u == 1:
        return SplitPlan((), 1, Fraction(m), 0, Fraction(0), Fraction(0), Fraction(0))

    cards = dict(zip(shape.union_vars, shape.cards))
    in1 = set(shape.vars1)
    in2 = set(shape.vars2)
    shared = [v for v in shape.result_vars if v in in1 and v in in2]
    only1 = [v for v in shape.result_vars if v in in1 and v not in in2]
    only2 = [v for v in shape.result_vars if v in in2 and v not in in1]

    split: list[int] = []
    capacity = 1
    slice1 = Fraction(shape.size1)
    slice2 = Fraction(shape.size2)
    for v in shared:
        if capacity >= n_u:
            break
        split.append(v)
        capacity *= cards[v]
        slice1 /= cards[v]
        slice2 /= cards[v]
    i1 = 0
    i2 = 0
    while capacity < n_u:
        from_first = i1 < len(only1) and (i2 >= len(only2) or slice1 >= slice2)
        if from_first:
            v = only1[i1]
            i1 += 1
            slice1 /= cards[v]
        else:
            v = only2[i2]
            i2 += 1
            slice2 /= cards[v]
        split.append(v)
        capacity *= cards[v]

    bpe = machine.bytes_per_entry
    k1 = math.prod(cards[v] for v in split if v in in1)
    k2 = math.prod(cards[v] for v in split if v in in2)
    b_d = bpe * (Fraction(shape.size1, k1) + Fraction(shape.size2, k2))
    return SplitPlan(
        split_vars=tuple(split),
        n_u=n_u,
        g=Fraction(m, n_u),
        d_max=n_u.bit_length() - 1,
        b_d=b_d,
        b_r=Fraction(bpe * rsize, n_u),
        b_total=n_u * b_d,
    )


def comm_distribute(plan: SplitPlan, machine: MachineParams) -> float:
    """Spanning-tree cost of shipping each worker its input slice."""
    if plan.n_u == 1:
        return 0.0
    return float(plan.d_max) * machine.c_st + float(plan.b_d) * (
        (plan.n_u - 1) * machine.c_b
    )


def comm_return(plan: SplitPlan, machine: MachineParams) -> float:
    """Spanning-tree cost of collecting the result slices."""
    if plan.n_u == 1:
        return 0.0
    return float(plan.d_max) * machine.c_st + float(plan.b_r) * (
        (plan.n_u - 1) * machine.c_b
    )


def parallel_cp_cost(shape, machine: MachineParams) -> CpCost:
    """Modeled parallel time of one conformal product.

    An undistributed product (n_u == 1) runs sequentially and pays no
    startup or communication at all.
    """
    plan = plan_split(shape, machine)
    t_s = machine.alpha * shape.multiply_count
    if plan.n_u == 1:
        return CpCost(t_s, t_s, t_s, 0.0, 0.0, 1, shape, plan)
    w = machine.alpha * float(plan.g)
    c_d = comm_distribute(plan, machine)
    c_r = comm_return(plan, machine)
    t_p = (
        (((machine.p_init + machine.s_setup) + w) + c_d) + c_r
    ) + machine.b_buffer
    return CpCost(t_s, t_p, w, c_d, c_r, plan.n_u, shape, plan)


def _tree_shapes(tree):
    """(node_id, CpShape) for every product node, children before parents."""
    from .factoring import tree_stats

    stats = tree_stats(tree)
    ids = [i for i, n in enumerate(tree.nodes) if not n.is_leaf]
    return list(zip(ids, stats.shapes))


def query_costs(tree, machine: MachineParams) -> QueryCost:
    """Per-product costs and their query-level sums.

    Sequential products contribute their full t_s to the computation
    total; only distributed products contribute communication.
    """
    per = tuple(parallel_cp_cost(sh, machine) for _, sh in _tree_shapes(tree))
    return QueryCost(
        per_cp=per,
        t_s_query=sum(c.t_s for c in per),
        t_p_query=sum(c.t_p for c in per),
        n_u_query=max((c.n_u for c in per), default=1),
        cm_total=sum(c.c_d + c.c_r for c in per),
        cp_total=sum(c.w for c in per),
    )


def longest_path(tree, machine: MachineParams) -> LongestPath:
    """The root-to-leaf path whose products cost the most sequentially.

    seq_time sums the sequential product times along that path: the floor
    for any schedule that runs disjoint subtrees concurrently but each
    product on one processor.  par_time sums the same products' modeled
    parallel times, pricing tree-level concurrency on top of per-product
    distribution; concurrent subtrees are assumed to find processors
    beyond the per-product allotment, so each product keeps the cost it
    has in the plain query run.  Requires children to precede parents in
    the node list, which built and saved trees guarantee.
    """
    shapes = dict(_tree_shapes(tree))
    t_s = {i: seq_cp_cost(sh, machine) for i, sh in shapes.items()}
    below: dict[int, float] = {}
    for i, node in enumerate(tree.nodes):
        if node.is_leaf:
            below[i] = 0.0
        else:
            below[i] = t_s[i] + max(below[node.left], below[node.right])
    path = []
    at = tree.root
    while not tree.nodes[at].is_leaf:
        path.append(at)
        node = tree.nodes[at]
        at = node.left if below[node.left] >= below[node.right] else node.right
    par_time = sum(parallel_cp_cost(shapes[i], machine).t_p for i in path)
    return LongestPath(
        cp_count=len(path),
        seq_time=sum(t_s[i] for i in path),
        par_time=par_time,
        node_ids=tuple(path),
    )


def distnet_cp_comm(shape, plan: SplitPlan, machine: MachineParams) -> float:
    """Distributed-net communication for one product: the result slices
    are gathered and the assembled result broadcast back, so the return
    path is paid twice and there is no input distribution."""
    if plan.n_u == 1:
        return 0.0
    return 2.0 * comm_return(plan, machine)


def memory_accounting(tree, machine: MachineParams):
    """Per-processor byte estimates: (bca_mem, bca_mem_excl_final, dist_mem).

    bca_mem totals the bytes moved to and from one worker over all
    products; bca_mem_excl_final drops the root product, whose limited
    split inflates the figure; dist_mem is the resident footprint of the
    biggest product when inputs and result all live on every processor.
    """
    items = _tree_shapes(tree)
    if not items:
        return 0.0, 0.0, 0.0
    root_id = tree.root
    total = Fraction(0)
    total_excl = Fraction(0)
    biggest = 0
    for node_id, shape in items:
        plan = plan_split(shape, machine)
        moved = plan.b_d + plan.b_r
        total += moved
        if node_id != root_id:
            total_excl += moved
        biggest = max(biggest, shape.size1 + shape.size2 + shape.result_size)
    dist_mem = float(machine.bytes_per_entry * biggest)
    return float(total), float(total_excl), dist_mem
