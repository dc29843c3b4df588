"""Command-line driver: gen, query, plan, simulate, experiment, validate.

Every command is a pure function of its flags and seeds; experiment runs
derive one seed per net from the master seed with a splitmix64 mix, so a
rerun with the same flags reproduces every output byte.

Exit codes: 0 ok, 2 usage, 3 parse error, 4 validation failure, 5 size cap.
"""

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__, costmodel, factoring, metrics, network
from .factors import DimensionCapError, brute_force_posterior, query_factors

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_CAP = 5

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def net_seed(master: int, index: int) -> int:
    """Per-net seed: mix the master seed xor the net index."""
    return splitmix64((master ^ index) & _MASK64)


def _int_range(text: str):
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return int(lo), int(hi)
        return int(text), int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected INT or INT..INT, got {text!r}")


def _float_range(text: str):
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return float(lo), float(hi)
        return float(text), float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NUM or NUM..NUM, got {text!r}")


def _machine_from_args(args) -> costmodel.MachineParams:
    machine = (
        costmodel.load_machine(args.machine)
        if getattr(args, "machine", None)
        else costmodel.DEFAULT_MACHINE
    )
    if getattr(args, "procs", None):
        machine = replace(machine, n_a=args.procs)
    if getattr(args, "grainsize", None) is not None:
        machine = replace(machine, g_min=args.grainsize)
    return machine


def _gen_params(args) -> network.NetGenParams:
    return network.NetGenParams(
        node_count_range=args.nodes,
        avg_arcs_range=args.arcs,
        obs_count_range=args.obs,
        seed=args.seed,
    )


def cmd_gen(args) -> int:
    net, query = network.random_net(_gen_params(args))
    if args.out:
        network.save_net(net, query, args.out)
        print(f"wrote {args.out}: {net.node_count} nodes, "
              f"{net.arc_count} arcs, {len(query.evidence)} observed, "
              f"query {query.query_var}")
    else:
        json.dump(network._net_to_obj(net, query), sys.stdout, indent=1)
        sys.stdout.write("\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        network.load_net(args.net)
    except network.NetValidationError as exc:
        for v in exc.violations:
            print(f"{v.kind}: {v.message}")
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


def cmd_query(args) -> int:
    net, query = network.load_net(args.net)
    machine = _machine_from_args(args)
    scopes, cards, _ = factoring.scopes_for_query(net, query)
    tree = factoring.build_tree(
        args.heuristic, scopes, cards, query.query_var, machine
    )
    post = factoring.evaluate_tree(
        tree, query_factors(net, query), max_dim=args.max_dim
    )
    name = net.variables[query.query_var].name
    print(f"P({name} | {len(query.evidence)} observations)")
    for value, p in enumerate(post.table):
        print(f"  {name}={value}: {p:.6f}")
    if args.check_oracle:
        oracle = brute_force_posterior(net, query)
        dev = float(max(abs(a - b) for a, b in zip(post.table, oracle.table)))
        print(f"max deviation from joint enumeration: {dev:.3e}")
    return EXIT_OK


def cmd_plan(args) -> int:
    net, query = network.load_net(args.net)
    machine = _machine_from_args(args)
    scopes, cards, _ = factoring.scopes_for_query(net, query)
    tree = factoring.build_tree(
        args.heuristic, scopes, cards, query.query_var, machine
    )
    stats = factoring.tree_stats(tree)
    summary = (
        f"heuristic={args.heuristic} factors={tree.leaf_count} "
        f"cps={stats.cp_count} dm={stats.dm} md={stats.md} dd={stats.dd:.2f}"
    )
    if args.out:
        factoring.save_tree(tree, args.out)
        print(summary)
    else:
        json.dump(factoring._tree_to_obj(tree), sys.stdout, indent=1)
        sys.stdout.write("\n")
        print(summary, file=sys.stderr)
    return EXIT_OK


def _load_net_or_tree(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise network.NetFormatError(f"{path}: not valid JSON ({exc})") from exc
    kind = obj.get("format") if isinstance(obj, dict) else None
    if kind == factoring.TREE_FORMAT:
        return "tree", factoring.load_tree(path)
    if kind == network.NET_FORMAT:
        return "net", network.load_net(path)
    raise network.NetFormatError(f"{path}: unrecognized format {kind!r}")


class _TreeOnlyNet:
    """Minimal net stand-in so a bare tree file can still fill a row."""

    def __init__(self, tree):
        self.node_count = len(tree.var_cards)
        self.arc_count = 0

    def avg_in_arcs(self) -> float:
        return 0.0


def _rows_for_net(net, query, heuristics, machine, net_index):
    scopes, cards, _ = factoring.scopes_for_query(net, query)
    trees = {
        h: factoring.build_tree(h, scopes, cards, query.query_var, machine)
        for h in heuristics
    }
    return metrics.build_report_rows(net, query, trees, machine, net_index)


@dataclass(frozen=True)
class ExperimentConfig:
    """One full protocol run: net count, generator ranges, heuristics,
    machine, and the master seed that derives every per-net seed."""

    count: int = 8
    node_count_range: tuple[int, int] = (10, 100)
    avg_arcs_range: tuple[float, float] = (1.0, 5.0)
    obs_count_range: tuple[int, int] = (1, 20)
    heuristics: tuple[str, ...] = factoring.HEURISTICS
    machine: costmodel.MachineParams = field(
        default_factory=lambda: costmodel.DEFAULT_MACHINE
    )
    master_seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if not self.heuristics:
            raise ValueError("at least one heuristic is required")
        unknown = set(self.heuristics) - set(factoring.HEURISTICS)
        if unknown:
            raise ValueError(f"unknown heuristics: {sorted(unknown)}")


def run_experiment(config: ExperimentConfig, out_dir) -> dict:
    """Generate, plan, and cost `config.count` nets; write every table
    under out_dir.  Deterministic per master seed; a net whose generation
    or planning fails is recorded in errors.csv and skipped.  Returns the
    run metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    heuristics = list(config.heuristics)
    per_net_rows = []
    failures = []
    for i in range(1, config.count + 1):
        seed = net_seed(config.master_seed, i)
        params = network.NetGenParams(
            node_count_range=config.node_count_range,
            avg_arcs_range=config.avg_arcs_range,
            obs_count_range=config.obs_count_range,
            seed=seed,
        )
        try:
            net, query = network.random_net(params)
            per_net_rows.append(
                _rows_for_net(net, query, heuristics, config.machine, i)
            )
        except Exception as exc:  # record and keep going
            failures.append((i, seed, f"{type(exc).__name__}: {exc}"))
    meta = {
        "version": __version__,
        "config": (
            f"count={config.count} seed={config.master_seed} "
            f"nodes={config.node_count_range} arcs={config.avg_arcs_range} "
            f"obs={config.obs_count_range} heuristics={heuristics}"
        ),
        "seed_rule": "net_seed(i) = splitmix64(master xor i)",
        "machine": {k: getattr(config.machine, k) for k in costmodel.MACHINE_KEYS},
        "heuristics": heuristics,
        "memory_tables_heuristic": (
            "set-factoring-c" if "set-factoring-c" in heuristics else heuristics[0]
        ),
        "net_count": len(per_net_rows),
        "failures": len(failures),
        "note": "seq-time is the best sequential time over the heuristics above",
    }
    if per_net_rows:
        _write_tables(out, per_net_rows, heuristics, meta)
    if failures:
        lines = ["net_index,seed,error"]
        lines += [f"{i},{s},{msg!r}" for i, s, msg in failures]
        (out / "errors.csv").write_text("\n".join(lines) + "\n")
    with open(out / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return meta


def cmd_simulate(args) -> int:
    machine = _machine_from_args(args)
    kind, loaded = _load_net_or_tree(args.input)
    if kind == "net":
        net, query = loaded
        heuristics = args.heuristic or list(factoring.HEURISTICS)
        rows = _rows_for_net(net, query, heuristics, machine, 1)
    else:
        tree = loaded
        dummy = _TreeOnlyNet(tree)
        query = network.QuerySpec(tree.query_var, {})
        rows = metrics.build_report_rows(dummy, query, {"tree": tree}, machine, 1)
    for heuristic, row in rows.items():
        print(metrics.table_text([row], metrics.RESULTS_TABLE_COLUMNS,
                                 title=f"results ({heuristic})"))
        print(metrics.table_text([row], metrics.MEMORY_TABLE_COLUMNS,
                                 title=f"memory/communication ({heuristic})"))
        print(metrics.table_text([row], metrics.TREE_PARALLELISM_COLUMNS,
                                 title=f"tree parallelism ({heuristic})"))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        all_rows = list(rows.values())
        (out / "details.csv").write_text(metrics.details_csv(all_rows))
        print(f"wrote {out / 'details.csv'}")
    return EXIT_OK


def _write_tables(out: Path, per_net_rows, heuristics, meta) -> None:
    header = [f"factorcube {__version__}", f"config {meta['config']}"]
    first = heuristics[0]
    table_rows = {h: [rows[h] for rows in per_net_rows] for h in heuristics}
    (out / "nets_table.csv").write_text(
        metrics.table_csv(table_rows[first], metrics.NET_TABLE_COLUMNS, header)
    )
    (out / "nets_table.txt").write_text(
        metrics.table_text(table_rows[first], metrics.NET_TABLE_COLUMNS,
                           title="random net descriptions")
    )
    for h in heuristics:
        slug = h.replace("-", "_")
        (out / f"results_{slug}.csv").write_text(
            metrics.table_csv(table_rows[h], metrics.RESULTS_TABLE_COLUMNS, header)
        )
        (out / f"results_{slug}.txt").write_text(
            metrics.table_text(table_rows[h], metrics.RESULTS_TABLE_COLUMNS,
                               title=f"results for {h}")
        )
    comm_h = meta["memory_tables_heuristic"]
    (out / "memory_comparison.csv").write_text(
        metrics.table_csv(table_rows[comm_h], metrics.MEMORY_TABLE_COLUMNS, header)
    )
    (out / "memory_comparison.txt").write_text(
        metrics.table_text(table_rows[comm_h], metrics.MEMORY_TABLE_COLUMNS,
                           title=f"dist-net vs BCA ({comm_h})")
    )
    (out / "tree_parallelism.csv").write_text(
        metrics.table_csv(table_rows[comm_h], metrics.TREE_PARALLELISM_COLUMNS, header)
    )
    (out / "tree_parallelism.txt").write_text(
        metrics.table_text(table_rows[comm_h], metrics.TREE_PARALLELISM_COLUMNS,
                           title=f"evaluation-tree parallelism ({comm_h})")
    )
    details = [rows[h] for rows in per_net_rows for h in heuristics]
    (out / "details.csv").write_text(metrics.details_csv(details, header))


def cmd_experiment(args) -> int:
    config = ExperimentConfig(
        count=args.count,
        node_count_range=args.nodes,
        avg_arcs_range=args.arcs,
        obs_count_range=args.obs,
        heuristics=tuple(args.heuristic or factoring.HEURISTICS),
        machine=_machine_from_args(args),
        master_seed=args.seed,
    )
    meta = run_experiment(config, args.out)
    print(f"{meta['net_count']} nets simulated, {meta['failures']} failures, "
          f"tables in {args.out}")
    return EXIT_OK


def _add_machine_flags(p) -> None:
    p.add_argument("--machine", help="machine parameter JSON file")
    p.add_argument("--procs", type=int, help="override processor count")
    p.add_argument("--grainsize", type=int, help="override minimum grainsize")


def _add_gen_flags(p) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=_int_range, default=(10, 100),
                   metavar="A..B")
    p.add_argument("--arcs", type=_float_range, default=(1.0, 5.0),
                   metavar="A..B")
    p.add_argument("--obs", type=_int_range, default=(1, 20), metavar="A..B")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factorcube",
        description="Belief-net factoring inference and hypercube cost simulation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random net + query file")
    _add_gen_flags(p)
    p.add_argument("--out", help="output net file (stdout when omitted)")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("validate", help="check a net file")
    p.add_argument("net")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("query", help="answer a net file's query numerically")
    p.add_argument("net")
    p.add_argument("--heuristic", choices=factoring.HEURISTICS,
                   default="set-factoring")
    p.add_argument("--check-oracle", action="store_true",
                   help="also report deviation from full joint enumeration")
    p.add_argument("--max-dim", type=int, default=factoring.DEFAULT_EVAL_CAP,
                   help="largest product dimension evaluated numerically")
    _add_machine_flags(p)
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("plan", help="build and save an evaluation tree")
    p.add_argument("net")
    p.add_argument("--heuristic", choices=factoring.HEURISTICS,
                   default="set-factoring")
    p.add_argument("--out", help="output tree file (stdout when omitted)")
    _add_machine_flags(p)
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("simulate", help="cost-model a net or tree file")
    p.add_argument("input", help="net file or tree file")
    p.add_argument("--heuristic", action="append",
                   choices=factoring.HEURISTICS,
                   help="repeatable; default: all three")
    p.add_argument("--out", help="also write full-precision CSV here")
    _add_machine_flags(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("experiment", help="run the full random-net protocol")
    p.add_argument("--count", type=int, default=8, help="number of nets")
    _add_gen_flags(p)
    p.add_argument("--heuristic", action="append",
                   choices=factoring.HEURISTICS,
                   help="repeatable; default: all three")
    p.add_argument("--out", required=True, help="output directory")
    _add_machine_flags(p)
    p.set_defaults(fn=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "count", 1) < 1:
        parser.error("--count must be at least 1")
    try:
        return args.fn(args)
    except network.GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except network.NetValidationError as exc:
        for v in exc.violations:
            print(f"error: {v.kind}: {v.message}", file=sys.stderr)
        return EXIT_VALIDATION
    except network.NetFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
