"""``spectree`` command line: simulate, learn, decode, eval, check-rank.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import formats
from .config import RunConfig, default_threads
from .decoder import posterior_decode
from .evaluation import align, align_labels, compare_models, f1_report
from .learner import LearnerError
from .model import ModelError, ThsHmmParams, TreeStructure, check_rank_conditions
from .recovery import learn
from .simulator import sample_long, sample_triples

logger = logging.getLogger("spectree")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    threads = args.threads if args.threads is not None else default_threads()
    return cfg.replace(seed=args.seed, threads=threads,
                       window=getattr(args, "window", None))


def parse_parents(spec: str, names) -> TreeStructure:
    """Tree from a comma-separated parent list aligned with ``names``.

    Entries are parent names or indices; ``none`` (or ``-``) marks the root,
    e.g. ``none,root,root`` for a three-node star.
    """
    items = [s.strip() for s in spec.split(",")]
    if len(items) != len(names):
        raise UsageError(f"--parents lists {len(items)} entries for {len(names)} nodes")
    parents = []
    for item in items:
        if item.lower() in ("none", "-", "-1", ""):
            parents.append(-1)
        elif item in names:
            parents.append(list(names).index(item))
        elif item.isdigit() and int(item) < len(names):
            parents.append(int(item))
        else:
            raise UsageError(f"unknown parent {item!r}")
    return TreeStructure(tuple(parents), tuple(names))


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    params, tree, _ = formats.read_model(args.model)
    names = [tree.label(u) for u in range(tree.size)]
    seed = args.seed if args.seed is not None else 0
    if args.mode == "triples":
        if args.N is None:
            raise UsageError("--N is required for mode=triples")
        batch, trace = sample_triples(params, tree, args.N, seed)
    else:
        if args.T is None:
            raise UsageError("--T is required for mode=long")
        batch, trace = sample_long(params, tree, args.T, args.burn_in, seed)
    formats.write_observations(args.out, batch, names, args.marks)
    truth = args.truth or args.out + ".states.tsv"
    formats.write_states(truth, trace, names, batch.mode)
    logger.info("wrote %s and %s", args.out, truth)
    return EXIT_OK


def _log_diagnostics(path, result, tree):
    obs = result.observations
    with open(path, "w") as fh:
        fh.write(formats.HEADER + "\n#kind\tdiagnostics\n")
        for u, s in sorted(obs.diagnostics.get("range_singular_values", {}).items()):
            fh.write(f"node={tree.label(u)}\trange_singular_values="
                     + ",".join(f"{v:.6g}" for v in s) + "\n")
        for w in obs.diagnostics.get("warnings", []):
            fh.write(f"warning\t{w}\n")
        for u, d in sorted(obs.diagnostics.items(), key=lambda kv: str(kv[0])):
            if not isinstance(u, int):
                continue
            parts = []
            for key, value in d.items():
                if isinstance(value, (list, tuple, np.ndarray)):
                    value = ",".join(f"{float(v):.6g}" for v in np.ravel(value))
                elif isinstance(value, float):
                    value = f"{value:.6g}"
                parts.append(f"{key}={value}")
            fh.write(f"node={tree.label(u)}\t" + "\t".join(parts) + "\n")
        if result.transitions is not None:
            for w in result.transitions.warnings:
                fh.write(f"warning\t{w}\n")
        for u, msg in sorted(result.failures.items()):
            fh.write(f"node={tree.label(u)}\tfailed\t{msg}\n")


def cmd_learn(args) -> int:
    config = _config(args)
    batch, names = formats.read_observations(args.obs)
    tree = parse_parents(args.parents, names)
    if args.m > batch.n:
        raise ModelError(
            f"m={args.m} hidden states cannot be identified from n={batch.n} symbols: "
            "every emission matrix must have full column rank m, which needs m <= n")
    result = learn(batch, tree, args.m, config)
    log_path = args.log or args.out + ".log"
    _log_diagnostics(log_path, result, tree)
    if result.failures:
        for u, msg in sorted(result.failures.items()):
            logger.error("node %s failed: %s", tree.label(u), msg)
        if not args.allow_partial:
            logger.error("no model written; rerun with --allow-partial to keep the nodes that succeeded")
            return EXIT_NUMERIC
        partial = _partial_params(result, tree, args.m, batch.n)
        formats.write_model(args.out, partial, tree, result.failures)
        logger.warning("partial model written to %s", args.out)
        return EXIT_NUMERIC
    formats.write_model(args.out, result.params, tree)
    return EXIT_OK


def _partial_params(result, tree, m, n):
    obs = result.observations.obs
    tr = result.transitions
    return ThsHmmParams(m, n, [obs.get(u) for u in range(tree.size)],
                        [tr.trans.get(u) if tr else None for u in range(tree.size)],
                        [tr.init.get(u) if tr else None for u in range(tree.size)])


def cmd_decode(args) -> int:
    config = _config(args)
    params, tree, _ = formats.read_model(args.model)
    names = [tree.label(u) for u in range(tree.size)]
    batch, _ = formats.read_observations(args.obs, node_order=names)
    if batch.n > params.n:
        raise ModelError(f"observation alphabet n={batch.n} exceeds model n={params.n}")
    trace = posterior_decode(params, tree, batch, config.meta_state_cap,
                             args.log_space or config.log_space)
    formats.write_labels(args.out, trace, names, args.posteriors)
    return EXIT_OK


def cmd_eval(args) -> int:
    kind_a, kind_b = formats.sniff_kind(args.a), formats.sniff_kind(args.b)
    if kind_a == kind_b == "model":
        pa, ta, _ = formats.read_model(args.a)
        pb, tb, _ = formats.read_model(args.b)
        if ta.parents != tb.parents:
            raise ModelError("models have different trees")
        if (pa.m, pa.n) != (pb.m, pb.n):
            raise ModelError(f"models differ in shape: m,n = {pa.m},{pa.n} vs {pb.m},{pb.n}")
        cmp = compare_models(pa, pb, ta)
        rows = [[ta.label(u), ",".join(map(str, cmp.alignments[u].perm)),
                 cmp.alignments[u].error_op, cmp.alignments[u].error_fro,
                 cmp.obs_max[u], cmp.trans_max[u], cmp.init_max[u]] for u in range(ta.size)]
        formats.write_table(args.out, {"kind": "eval-models", "max_error": repr(cmp.max_error)},
                            formats.MODEL_EVAL_COLUMNS, rows)
        return EXIT_OK
    if {kind_a, kind_b} == {"labels", "states"}:
        lab_path, st_path = (args.a, args.b) if kind_a == "labels" else (args.b, args.a)
        labels = formats.read_labels(lab_path)
        trace, names = formats.read_states(st_path, node_order=sorted(labels))
        perms = None
        if args.align:
            pt, tt, _ = formats.read_model(args.align[0])
            pl, _, _ = formats.read_model(args.align[1])
            perms = {tt.label(u): align(pt.obs[u], pl.obs[u]).perm for u in range(tt.size)}
        rows = []
        for name, s in zip(names, trace.states):
            pred = labels[name]
            if pred.shape != s.shape:
                raise ModelError(f"node {name!r}: {pred.shape} labels vs {s.shape} states")
            if perms is not None:
                pred = align_labels(pred, perms[name])
            acc = float(np.mean(pred == s))
            for k, e in f1_report(pred, s, trace.m).items():
                rows.append([name, k, e.precision, e.recall, e.f1, e.tp, e.fp, e.fn, acc])
        formats.write_table(args.out, {"kind": "eval-labels"}, formats.F1_EVAL_COLUMNS, rows)
        return EXIT_OK
    raise UsageError(f"cannot compare a {kind_a} file with a {kind_b} file "
                     "(expected two models, or labels and states)")


def cmd_check_rank(args) -> int:
    config = _config(args)
    params, tree, _ = formats.read_model(args.model)
    threshold = args.threshold if args.threshold is not None else config.rank_threshold
    report = check_rank_conditions(params, tree, threshold, config.meta_state_cap)
    if args.out:
        formats.write_rank_report(args.out, report, tree)
    else:
        formats.write_rank_report(sys.stdout, report, tree)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: available CPUs)")
    common.add_argument("--config", default=None, help="JSON run configuration")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="spectree", description="Spectral learning for tree-structured HMMs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="sample observations from a model")
    p.add_argument("model")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None, help="hidden-state file (default: OUT.states.tsv)")
    p.add_argument("--mode", choices=("triples", "long"), default="triples")
    p.add_argument("--N", type=int, default=None, help="number of iid triples")
    p.add_argument("--T", type=int, default=None, help="length of the long sequence")
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--marks", type=int, default=None, help="write symbols as k binary marks")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", parents=[common], help="learn a model from observations")
    p.add_argument("obs")
    p.add_argument("--parents", required=True,
                   help="comma-separated parent of each node in file order, 'none' for the root")
    p.add_argument("--m", type=int, required=True, help="hidden states per node")
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="diagnostics log (default: OUT.log)")
    p.add_argument("--window", choices=("overlap", "disjoint"), default=None)
    p.add_argument("--allow-partial", action="store_true")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("decode", parents=[common], help="posterior-decode hidden states")
    p.add_argument("model")
    p.add_argument("obs")
    p.add_argument("--out", required=True)
    p.add_argument("--posteriors", action="store_true")
    p.add_argument("--log-space", action="store_true")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", parents=[common],
                       help="compare two models, or decoded labels against true states")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", required=True)
    p.add_argument("--align", nargs=2, metavar=("TRUE_MODEL", "LEARNED_MODEL"), default=None,
                   help="relabel decoded states by matching the two models' emissions")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check-rank", parents=[common], help="report rank-condition margins")
    p.add_argument("model")
    p.add_argument("--out", default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_check_rank)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"spectree {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LearnerError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"spectree {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (formats.FormatError, ModelError, ValueError, OSError) as exc:
        print(f"spectree {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
