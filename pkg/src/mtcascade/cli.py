"""Command-line entry point: ``mtcascade <command> ...``.

Exit codes: 0 success, 2 validation or usage error, 3 remote endpoint failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any

from . import __version__
from .config import load_config
from .core import Batch, ScoreOrientation, dumps_batch, load_batch, missing_report
from .costmodel import (
    cascade_equivalent_eta,
    parity_fraction,
    reranking_parity_k,
    reranking_relative_cost,
)
from .deferral import DeferralRule, select_deferrals
from .errors import CascadeError, EndpointError
from .evaluation import (
    DEFAULT_ALPHA,
    DEFAULT_GRID,
    DEFAULT_ITERATIONS,
    DEFAULT_MAX_EXACT_N,
    DEFAULT_TIE_THRESHOLD,
    crossover_budget,
    curves_to_csv,
    deferral_curve,
    mean_quality,
    paired_permutation_test,
    win_tie_loss,
)

log = logging.getLogger("mtcascade")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_REMOTE = 3


class UsageError(CascadeError):
    pass


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=False) + "\n"


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad grid {text!r}") from None
    if not grid:
        raise UsageError("empty grid")
    return grid


class Run:
    """Collects outputs of one command and writes them with a manifest."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.args = args
        self.argv = argv
        self.out = Path(args.out) if getattr(args, "out", None) else None
        self.outputs: list[str] = []
        self.inputs: dict[str, str] = {}

    def input(self, path: str) -> None:
        self.inputs[str(path)] = _sha256(path)

    def write(self, name: str, text: str) -> None:
        if self.out is None:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text, encoding="utf-8")
        self.outputs.append(name)

    def finish(self, **extra: Any) -> None:
        if self.out is None:
            return
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "config": getattr(self.args, "config", None),
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "tool_version": __version__,
        }
        manifest.update(extra)
        self.write("manifest.json", _dump(manifest))


def _orientations(args) -> list[ScoreOrientation]:
    cfg = load_config(args.config)
    extra = [ScoreOrientation.parse(s) for s in (args.orient or [])]
    return cfg.orientations + extra


def _load(args, run: Run) -> Batch:
    run.input(args.batch)
    return load_batch(args.batch, _orientations(args))


def _check_rule(batch: Batch, rule: DeferralRule) -> None:
    report = missing_report(batch, rule)
    if report:
        lines = [f"  {col}: {len(ids)} record(s), e.g. {', '.join(ids[:5])}" for col, ids in report.items()]
        raise CascadeError(f"rule {rule.label!r} needs columns missing from the batch:\n" + "\n".join(lines))


def cmd_defer(args, run: Run) -> int:
    batch = _load(args, run)
    rule = DeferralRule.parse(args.rule, seed=args.seed)
    _check_rule(batch, rule)
    decision = select_deferrals(batch, rule, args.eta)
    text = _dump(decision.to_dict())
    run.write("decision.json", text)
    run.finish(seed=args.seed, eta=args.eta, rule=rule.label)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_curve(args, run: Run) -> int:
    batch = _load(args, run)
    cfg = load_config(args.config)
    cost = cfg.cost_profile(args.cost_profile)
    grid = _parse_grid(args.grid)
    fam = args.quality_col
    rules = [DeferralRule.parse(r, seed=args.seed) for r in args.rules.split(",") if r.strip()]
    for rule in rules:
        _check_rule(batch, rule)
    curves = [deferral_curve(batch, rule, grid, cost, fam) for rule in rules]
    small_mean = mean_quality(batch.column(f"{fam}_small"))
    large_mean = mean_quality(batch.column(f"{fam}_large"))
    doc = {
        "batch": batch.name,
        "n": len(batch),
        "quality_column": fam,
        "cost_profile": args.cost_profile,
        "reference": {"small_mean": small_mean, "large_mean": large_mean},
        "curves": {
            rule.label: {
                "points": [p.to_dict() for p in curve],
                "crossover_to_large": crossover_budget(curve, large_mean),
            }
            for rule, curve in zip(rules, curves)
        },
    }
    run.write("curves.csv", curves_to_csv(curves))
    run.write("curves.json", _dump(doc))
    run.finish(seed=args.seed, grid=grid, cost_profile=args.cost_profile)
    sys.stdout.write(_dump(doc))
    return EXIT_OK


def cmd_parity(args, run: Run) -> int:
    cfg = load_config(args.config)
    cost = cfg.cost_profile(args.cost_profile)
    eta_star = parity_fraction(cost, warn=False)
    k_parity = reranking_parity_k(cost)
    k_max = args.k_max or max(k_parity + 1, 1)
    doc: dict[str, Any] = {
        "cost_profile": args.cost_profile,
        "parameters": cost.to_dict(),
        "parity_fraction": eta_star,
        "reranking_parity_k": k_parity,
        "cascade_equivalent": [
            {
                "k": k,
                "reranking_x": reranking_relative_cost(cost, k),
                "cascade_equivalent_eta": cascade_equivalent_eta(cost, k),
            }
            for k in range(1, k_max + 1)
        ],
    }
    if eta_star <= 0:
        doc["warning"] = "small+QE parameters reach the large model's; cascading cannot beat always-large"
        print(f"warning: {doc['warning']}", file=sys.stderr)
    run.write("parity.json", _dump(doc))
    run.finish(cost_profile=args.cost_profile)
    sys.stdout.write(_dump(doc))
    return EXIT_OK


def cmd_wtl(args, run: Run) -> int:
    batch = _load(args, run)
    res = win_tie_loss(batch, args.a, args.b, args.threshold)
    doc = {"a": args.a, "b": args.b, **res.to_dict()}
    run.write("wtl.json", _dump(doc))
    run.finish()
    sys.stdout.write(_dump(doc))
    return EXIT_OK


def cmd_permtest(args, run: Run) -> int:
    batch = _load(args, run)
    res = paired_permutation_test(
        batch.column(args.a),
        batch.column(args.b),
        alpha=args.alpha,
        max_exact_n=args.max_exact_n,
        iterations=args.iterations,
        seed=args.seed,
    )
    doc = {"a": args.a, "b": args.b, **res.to_dict()}
    run.write("permtest.json", _dump(doc))
    run.finish(seed=args.seed)
    sys.stdout.write(_dump(doc))
    return EXIT_OK


def _read_sources(path: str) -> tuple[list[str], list[str] | None, str]:
    """Sources from a JSONL file (``id``, ``source``, optional ``lang_pair``)
    or from plain text, one segment per line."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if path.endswith(".jsonl"):
        rows = []
        for i, line in enumerate(lines, start=1):
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CascadeError(f"{path}:{i}: {exc}") from None
        ids = [str(r.get("id", f"seg-{i}")) for i, r in enumerate(rows)]
        pairs = {r["lang_pair"] for r in rows if r.get("lang_pair")}
        return [r["source"] for r in rows], ids, pairs.pop() if len(pairs) == 1 else ""
    return lines, None, ""


def cmd_run_live(args, run: Run) -> int:
    from .gateway import ResponseCache, run_cascade_live

    cfg = load_config(args.config)
    run.input(args.sources)
    sources, ids, lang_pair = _read_sources(args.sources)
    cost = cfg.cost_profile(args.cost_profile)
    cache_dir = args.cache_dir or cfg.cache_dir
    cache = ResponseCache(cache_dir) if cache_dir else None
    result = run_cascade_live(
        sources,
        cfg.endpoint("small"),
        cfg.endpoint("qe"),
        cfg.endpoint("large"),
        args.eta,
        cost,
        cache=cache,
        ids=ids,
        lang_pair=args.lang_pair or lang_pair or cfg.lang_pair,
        name=Path(args.sources).stem,
    )
    run.write("batch.jsonl", dumps_batch(result.batch))
    run.write("decision.json", _dump(result.decision.to_dict()))
    run.write("cost.json", _dump(result.cost.to_dict() if result.cost else None))
    run.write("errors.json", _dump([e.to_dict() for e in result.errors]))
    run.finish(eta=args.eta, cost_profile=args.cost_profile, cache_dir=cache_dir)
    summary = {
        "n_sources": len(sources),
        "n_scored": len(result.batch),
        "deferred": len(result.decision.deferred),
        "errors": len(result.errors),
        "network_requests": result.requests,
    }
    sys.stdout.write(_dump(summary))
    return EXIT_REMOTE if result.errors else EXIT_OK


def cmd_replay(args, run: Run) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    return main(manifest["argv"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtcascade", description="QE-based deferral for cascaded MT.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, batch=True):
        if batch:
            sp.add_argument("batch", help="JSONL batch file")
            sp.add_argument(
                "--orient",
                action="append",
                metavar="COL=DIR",
                help="declare a column lower_better/higher_better (repeatable)",
            )
        sp.add_argument("--config", help="YAML config (default: $MTCASCADE_CONFIG)")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("defer", help="select records to defer at one budget")
    common(sp)
    sp.add_argument("--rule", default="qe", help="qe, random, length, -length, logprobs, oracle[:family]")
    sp.add_argument("--eta", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_defer)

    sp = sub.add_parser("curve", help="deferral curves over a budget grid")
    common(sp)
    sp.add_argument("--rules", default="qe,random,oracle")
    sp.add_argument("--grid", default=",".join(repr(x) for x in DEFAULT_GRID))
    sp.add_argument("--cost-profile", default="tower-7b+kiwi22")
    sp.add_argument("--quality-col", default="quality", help="column family, e.g. quality or human")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_curve)

    sp = sub.add_parser("parity", help="parity fraction and reranking break-even")
    common(sp, batch=False)
    sp.add_argument("--cost-profile", default="tower-7b+kiwi22")
    sp.add_argument("--k-max", type=int, default=None)
    sp.set_defaults(func=cmd_parity)

    sp = sub.add_parser("wtl", help="win/tie/loss rates of column A against B")
    common(sp)
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--threshold", type=float, default=DEFAULT_TIE_THRESHOLD)
    sp.set_defaults(func=cmd_wtl)

    sp = sub.add_parser("permtest", help="paired permutation test of column A against B")
    common(sp)
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    sp.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    sp.add_argument("--max-exact-n", type=int, default=DEFAULT_MAX_EXACT_N)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_permtest)

    sp = sub.add_parser("run-live", help="run the cascade against remote endpoints")
    sp.add_argument("sources", help="sources as .jsonl (id, source) or plain text lines")
    sp.add_argument("--config", help="YAML config (default: $MTCASCADE_CONFIG)")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--eta", type=float, required=True)
    sp.add_argument("--cost-profile", default="tower-7b+kiwi22")
    sp.add_argument("--cache-dir", help="response cache directory (overrides config)")
    sp.add_argument("--lang-pair", default="")
    sp.set_defaults(func=cmd_run_live)

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    run = Run(args, argv)
    try:
        return args.func(args, run)
    except EndpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (CascadeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
