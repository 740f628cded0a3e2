"""``archsmith`` command line: search, aggregate, extrapolate, plan and friends.

Exit codes: 0 success, 1 domain error (bad input, failed check), 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analysis
from .aggregate import (
    DEFAULT_MULTIDATASET_DECAY,
    DEFAULT_N2_DECAY,
    PoolRecord,
    aggregate_exponential_multidataset,
    aggregate_pool,
    rank_architectures,
    read_pool_file,
    write_pool_file,
)
from .arch import Primitive, format_architecture, parse_architecture
from .errors import ArchsmithError, ParseError
from .extrapolate import Fill, Origin, choose_depth, extrapolate, parse_pattern
from .proxy import Direction
from .scale import LayerCounts, load_scale_config, params_model, plan_budgets
from .search import RunLog, make_evaluator, resolve_proposer, run_greedy, verify_log
from .workspace import Limits, Workspace, dumps, load_task, read_submission, write_submission

log = logging.getLogger("archsmith")

CLAMP_GAP = 1e-12


def parse_seeds(text: str) -> list[int]:
    """``"1..10"``, ``"3"`` or ``"1,4,7"`` (ranges may be mixed with commas)."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            a, b = int(lo), int(hi)
            if b < a:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _seeds_arg(text: str) -> list[int]:
    try:
        return parse_seeds(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _layers_arg(text: str) -> LayerCounts:
    counts: dict[str, int] = {}
    try:
        for part in text.split(","):
            key, value = part.split("=")
            counts[key.strip()] = int(value)
        return LayerCounts.from_mapping(counts)
    except (ValueError, KeyError) as exc:
        raise argparse.ArgumentTypeError(f"expected e.g. A=10,M=19 ({exc})") from None


def _budgets_arg(text: str) -> list[str]:
    return [b.strip() for b in text.split(",") if b.strip()]


def _architecture_from(text: str) -> tuple[Primitive, ...]:
    """A token file, a token string, or compact notation."""
    path = Path(text)
    if path.is_file():
        text = path.read_text(encoding="utf-8").splitlines()[0]
    words = text.split()
    if words and all(w.lower() in ("mlp", "mh-attention", "mamba2", "mamba", "mb") for w in words):
        return parse_architecture(text, tuple(Primitive), len(words))
    return parse_pattern(text)


# -- search --------------------------------------------------------------------


def _run_one(task_dir: str, seed: int, proposer_spec: str, max_steps: int | None) -> str:
    task = load_task(task_dir)
    limits = task.limits if max_steps is None else Limits(max_steps, task.limits.wall_clock)
    proposer = resolve_proposer(proposer_spec)
    evaluator = make_evaluator(task)
    try:
        return run_greedy(task, proposer, evaluator, limits, seed).to_jsonl()
    finally:
        proposer.close()
        evaluator.close()


def cmd_search(args: argparse.Namespace) -> int:
    ws = Workspace(args.task)
    out = Path(args.out) if args.out else ws.root
    (out / "logs").mkdir(parents=True, exist_ok=True)
    (out / "pools").mkdir(parents=True, exist_ok=True)
    jobs = args.jobs or int(os.environ.get("ARCHSMITH_JOBS", "1") or 1)
    work = [(str(ws.root), s, args.proposer, args.max_steps) for s in args.seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            texts = list(ex.map(_run_one, *zip(*work)))
    else:
        texts = [_run_one(*w) for w in work]

    agent = args.agent or args.proposer
    records: list[PoolRecord] = []
    rows = []
    for seed, text in zip(args.seeds, texts):
        (out / "logs" / f"run_seed{seed:04d}.jsonl").write_text(text, encoding="utf-8")
        run = RunLog.from_jsonl(text)
        for n in run.nodes:
            if n.valid:
                arch = parse_architecture(n.arch, ws.manifest.pool, ws.manifest.length)
                records.append(PoolRecord(arch, n.val_fitness, n.test_fitness, agent, seed, ws.manifest.task_id))
        s = run.summary()
        rows.append(s)
        if s["submitted_arch"] is not None:
            sub_dir = out / "submissions"
            sub_dir.mkdir(exist_ok=True)
            best = parse_architecture(s["submitted_arch"], ws.manifest.pool, ws.manifest.length)
            write_submission(best, sub_dir / f"seed{seed:04d}.txt")
    write_pool_file(records, out / "pools" / f"{ws.manifest.task_id}.jsonl")

    print(f"{'seed':>6} {'steps':>6} {'valid':>6} {'best_val':>10} {'best_test':>10} {'submitted':>10}")
    for s in rows:
        fmt = lambda v: "-" if v is None else f"{v:.6g}"  # noqa: E731
        print(
            f"{s['seed']:>6} {s['steps']:>6} {s['valid']:>6} {fmt(s['best_val']):>10} "
            f"{fmt(s['best_test']):>10} {fmt(s['submitted_test']):>10}"
        )
    return 0


# -- aggregate / extrapolate / plan ---------------------------------------------


def cmd_aggregate(args: argparse.Namespace) -> int:
    direction = Direction(args.direction)
    if args.method == "multidataset":
        pools = []
        for p in args.pool:
            recs = read_pool_file(p)
            pools.append(rank_architectures(recs, direction, Path(p).stem))
        arch = aggregate_exponential_multidataset(pools, args.top_n or 20, args.decay or DEFAULT_MULTIDATASET_DECAY)
    else:
        records = [r for p in args.pool for r in read_pool_file(p)]
        k = None if args.k == 0 else args.k
        decay = DEFAULT_N2_DECAY if args.decay is None else args.decay
        arch = aggregate_pool(records, args.method, direction, k, args.seed, args.top_n, decay)
    if args.out:
        write_submission(arch, args.out)
    print(format_architecture(arch))
    return 0


def cmd_extrapolate(args: argparse.Namespace) -> int:
    base = _architecture_from(args.base)
    fill: Fill | Primitive = Fill.PREFIX
    if args.fill in ("prefix", "suffix"):
        fill = Fill(args.fill)
    elif args.fill:
        fill = Primitive.from_symbol(args.fill)
    mode = Origin.STACKED if args.mode == "stack" else Origin.STRETCHED
    cfg = load_scale_config(args.config) if args.config else None
    if args.depth is not None:
        depth = args.depth
    else:
        if cfg is None or args.target_params is None:
            raise ArchsmithError("give --depth, or --config with --target-params")
        depth = choose_depth(base, cfg, mode, float(args.target_params), fill=fill)
    pattern = extrapolate(base, depth, mode, fill)
    meta = pattern.describe(cfg)
    text = f"{pattern.compact()}\n{pattern.tokens()}\n"
    if args.out:
        Path(args.out).with_suffix(".txt").write_text(text, encoding="utf-8")
        Path(args.out).with_suffix(".json").write_text(dumps(meta) + "\n", encoding="utf-8")
    sys.stdout.write(text)
    if cfg is not None:
        print(f"depth={meta['depth']} params_non_embed={meta['params_non_embed']} params_total={meta['params_total']}")
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = load_scale_config(args.config)
    if args.layers is not None:
        counts = args.layers
    elif args.pattern:
        counts = LayerCounts.from_layers(_architecture_from(args.pattern))
    else:
        raise ArchsmithError("give --layers or --pattern")
    plan = plan_budgets(counts, cfg, args.budgets, args.rounding)
    if args.json:
        non_embed, total = params_model(counts, cfg)
        print(dumps({
            "config": cfg.name,
            "counts": {"A": counts.attn, "M": counts.mlp, "Mb": counts.ssm},
            "c_step": plan.c_step,
            "steps": {str(b): s for b, s in plan.steps.items()},
            "params_non_embed": non_embed,
            "params_total": total,
        }))
    else:
        print(",".join(str(s) for s in plan.steps.values()))
    return 0


# -- score / frontier / pareto ---------------------------------------------------


def _clamped(s: float, s_opt: float) -> float:
    if abs(s - s_opt) < CLAMP_GAP:
        log.warning("score %r is within %g of the optimum; clamping", s, CLAMP_GAP)
        return s_opt - CLAMP_GAP if s <= s_opt else s_opt + CLAMP_GAP
    return s


def cmd_score(args: argparse.Namespace) -> int:
    if args.metric == "vsr":
        value = analysis.vsr(args.valid, args.total)
    elif args.metric == "phi":
        value = analysis.march_of_9s(_clamped(args.s, args.opt), args.opt)
    elif args.metric == "gap":
        value = analysis.generalization_gap(args.best, args.submitted, Direction(args.direction))
    else:
        ctx = analysis.ScoreContext(args.min, args.sota, args.opt)
        value = analysis.normalized_score(_clamped(args.s, args.opt), ctx)
    print(f"{value:.6g}")
    return 0


def cmd_frontier(args: argparse.Namespace) -> int:
    fit, _ = analysis.frontier_from_sweep(analysis.read_sweep_csv(args.input))
    baseline = None
    if args.baseline:
        baseline, _ = analysis.frontier_from_sweep(analysis.read_sweep_csv(args.baseline))
    text = analysis.frontier_csv(fit, baseline)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_pareto(args: argparse.Namespace) -> int:
    text = analysis.pareto_csv(analysis.pareto_frontier(analysis.read_pareto_csv(args.input)))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


# -- checks --------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    task = load_task(args.task)
    try:
        arch = read_submission(args.file, task)
    except ParseError as exc:
        print(f"INVALID {exc.reason}: {exc}")
        return 1
    print(f"OK {format_architecture(arch)}")
    return 0


def cmd_verify_log(args: argparse.Namespace) -> int:
    status = 0
    for path in args.logs:
        problems = verify_log(RunLog.read(path), args.draft_count)
        if problems:
            status = 1
            for p in problems:
                print(f"{path}: {p}")
        else:
            print(f"{path}: ok")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="archsmith", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", help="greedy tree search over a task")
    s.add_argument("--task", required=True, help="task directory containing task.json")
    s.add_argument("--seeds", type=_seeds_arg, default=[0], help="e.g. 1..10 or 1,3,5")
    s.add_argument("--proposer", default="builtin:mutate", help="builtin:mutate, cmd:<command> or tcp://host:port")
    s.add_argument("--agent", default="", help="agent name recorded in the pool (default: proposer)")
    s.add_argument("--jobs", type=int, default=0, help="parallel seeds (default $ARCHSMITH_JOBS or 1)")
    s.add_argument("--max-steps", type=int, default=None)
    s.add_argument("--out", default="", help="output directory (default: the task directory)")
    s.set_defaults(func=cmd_search)

    a = sub.add_parser("aggregate", help="collapse pools into one base architecture")
    a.add_argument("--pool", nargs="+", required=True)
    a.add_argument("--method", choices=("n0", "n1", "n2", "multidataset"), default="n1")
    a.add_argument("--direction", choices=[d.value for d in Direction], default="maximize")
    a.add_argument("--k", type=int, default=3, help="clusters (0 = no clustering)")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--top-n", type=int, default=None)
    a.add_argument("--decay", type=float, default=None)
    a.add_argument("--out", default="")
    a.set_defaults(func=cmd_aggregate)

    e = sub.add_parser("extrapolate", help="stack or stretch a base pattern")
    e.add_argument("--base", required=True, help="token file, token string or compact pattern")
    e.add_argument("--mode", choices=("stack", "stretch"), required=True)
    e.add_argument("--depth", type=int, default=None)
    e.add_argument("--config", default="", help="scale preset or JSON file")
    e.add_argument("--target-params", type=float, default=None)
    e.add_argument("--fill", default="prefix", help="prefix, suffix or a primitive symbol (M, A, Mb)")
    e.add_argument("--out", default="", help="output path stem for .txt and .json")
    e.set_defaults(func=cmd_extrapolate)

    pl = sub.add_parser("plan", help="training steps per FLOP budget")
    pl.add_argument("--config", required=True)
    pl.add_argument("--layers", type=_layers_arg, default=None, help="e.g. A=10,M=19")
    pl.add_argument("--pattern", default="", help="pattern instead of --layers")
    pl.add_argument("--budgets", type=_budgets_arg, required=True, help="e.g. 2e19,4e19")
    pl.add_argument("--rounding", choices=("nearest", "floor"), default="nearest")
    pl.add_argument("--json", action="store_true")
    pl.set_defaults(func=cmd_plan)

    sc = sub.add_parser("score", help="normalized score and friends")
    ssub = sc.add_subparsers(dest="metric", required=True)
    ns = ssub.add_parser("ns")
    for flag in ("--s", "--min", "--sota", "--opt"):
        ns.add_argument(flag, type=float, required=True)
    phi = ssub.add_parser("phi")
    phi.add_argument("--s", type=float, required=True)
    phi.add_argument("--opt", type=float, required=True)
    v = ssub.add_parser("vsr")
    v.add_argument("--valid", type=int, required=True)
    v.add_argument("--total", type=int, required=True)
    g = ssub.add_parser("gap")
    g.add_argument("--best", type=float, required=True)
    g.add_argument("--submitted", type=float, required=True)
    g.add_argument("--direction", choices=[d.value for d in Direction], default="maximize")
    sc.set_defaults(func=cmd_score)

    f = sub.add_parser("frontier", help="isoFLOP parabolas and the compute-optimal frontier")
    f.add_argument("--input", required=True, help="CSV with budget_flops,model_size,val_loss")
    f.add_argument("--baseline", default="", help="baseline sweep CSV for dq/dm")
    f.add_argument("--out", default="")
    f.set_defaults(func=cmd_frontier)

    pa = sub.add_parser("pareto", help="latency/loss Pareto frontier")
    pa.add_argument("--input", required=True, help="CSV with latency_ms,val_loss")
    pa.add_argument("--out", default="")
    pa.set_defaults(func=cmd_pareto)

    vs = sub.add_parser("validate-submission", help="check a submission against a task")
    vs.add_argument("--task", required=True)
    vs.add_argument("--file", required=True)
    vs.set_defaults(func=cmd_validate)

    vl = sub.add_parser("verify-log", help="replay search invariants on run logs")
    vl.add_argument("logs", nargs="+")
    vl.add_argument("--draft-count", type=int, default=None)
    vl.set_defaults(func=cmd_verify_log)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ArchsmithError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
