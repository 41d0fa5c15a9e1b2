"""Command-line entry point: ``gptscore <command> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 backend error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import backends as bk
from .aspects import AspectError, builtin_registry, compose_definition
from .baselines import METRICS as ROUGE_METRICS
from .baselines import score_dataset_rouge
from .datasets import Dataset, DatasetError, Strategy, load
from .metaeval import (
    DEFAULT_ALPHA,
    DEFAULT_RESAMPLES,
    BootstrapError,
    CorrelationKind,
    CorrelationReport,
    DegenerateInputError,
    PairedScores,
    SignificanceResult,
    aggregate,
    bootstrap_compare,
    spearman,
)
from .prompt import Direction, PromptError, Setting, TemplateRegistry, builtin_templates
from .scoring import ScoreRecord, ScoringError, read_records, score_dataset, write_records

log = logging.getLogger("gptscore")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 2, 3, 4
DEFAULT_K_GRID = (0, 1, 2, 4, 8, 12)
METAEVAL_CSV_COLUMNS = ["dataset", "aspect", "model", "setting", "kind", "strategy", "value", "p_value"]


class UsageError(ValueError):
    pass


class JoinError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str
    aspects: list[str]
    backend: bk.BackendConfig | None
    direction: Direction | None = None
    setting: Setting = Setting.IST
    k: int = 0
    seed: int = 0
    output: str | None = None
    task: str | None = None
    templates: str | None = None
    metric: str = "gptscore"

    def __post_init__(self) -> None:
        if self.k < 0:
            raise UsageError("k must be >= 0")
        if self.k > 0 and self.setting is not Setting.IDM:
            raise UsageError("--k > 0 requires --setting idm")
        if self.metric != "gptscore" and self.metric not in ROUGE_METRICS:
            raise UsageError(f"unknown metric {self.metric!r}")
        if self.metric == "gptscore" and self.backend is None:
            raise UsageError("gptscore needs a backend configuration")


# --------------------------------------------------------------------------- config


def _backend_from(opts: dict) -> bk.BackendConfig:
    kind = opts.get("backend") or "http"
    try:
        return bk.BackendConfig(
            kind=kind,
            model_id=opts.get("model") or kind,
            endpoint_url=opts.get("endpoint"),
            max_parallel=int(opts.get("max_parallel") or 4),
            max_attempts=int(opts.get("max_attempts") or 5),
            base_backoff=float(opts.get("backoff") if opts.get("backoff") is not None else 1.0),
            cache_dir=opts.get("cache_dir"),
            fixture_path=opts.get("fixture"),
            corpus=opts.get("corpus"),
            offset_unit=opts.get("offset_unit") or "byte",
            boundary=opts.get("boundary") or "strict",
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _merged(args: argparse.Namespace) -> dict:
    """Config-file values overridden by any flag given on the command line."""
    opts: dict = {}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        backend = loaded.pop("backend", {})
        if isinstance(backend, dict):
            backend = {("backend" if k == "kind" else k): v for k, v in backend.items()}
            opts.update(backend)
        elif backend:
            opts["backend"] = backend
        opts.update(loaded)
    for key, value in vars(args).items():
        if value is not None and key not in ("func", "config"):
            opts[key] = value
    return opts


def run_config(opts: dict) -> RunConfig:
    if not opts.get("dataset"):
        raise UsageError("--dataset is required")
    aspects = opts.get("aspect") or opts.get("aspects") or []
    if isinstance(aspects, str):
        aspects = [aspects]
    try:
        direction = Direction.parse(opts["direction"]) if opts.get("direction") else None
        setting = Setting.parse(opts.get("setting") or "ist")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    metric = opts.get("metric") or "gptscore"
    return RunConfig(
        dataset=opts["dataset"],
        aspects=list(aspects),
        backend=_backend_from(opts) if metric == "gptscore" else None,
        direction=direction,
        setting=setting,
        k=int(opts.get("k") or 0),
        seed=int(opts.get("seed") or 0),
        output=opts.get("out") or opts.get("output"),
        task=opts.get("task"),
        templates=opts.get("templates"),
        metric=metric,
    )


def _templates(cfg: RunConfig) -> TemplateRegistry:
    return TemplateRegistry.load(cfg.templates) if cfg.templates else builtin_templates()


def _aspects_for(cfg: RunConfig, ds: Dataset) -> list[str]:
    if cfg.aspects:
        return cfg.aspects
    found = sorted({a for s in ds.samples for o in s.outputs for a in o.human_scores})
    if not found:
        raise UsageError("no --aspect given and the dataset has no human scores to infer from")
    return found


# --------------------------------------------------------------------------- joins


def build_paired(
    records: Sequence[ScoreRecord], ds: Dataset, aspect: str
) -> tuple[PairedScores, dict]:
    """Join records to human scores by (sample_id, system_id, aspect).

    Records with no matching output raise :class:`JoinError`; outputs that
    lack a human score for ``aspect`` are left out and counted.
    """
    by_key: dict[tuple[str, str], ScoreRecord] = {}
    for rec in records:
        if rec.aspect != aspect:
            continue
        key = (rec.sample_id, rec.system_id)
        if key in by_key:
            raise JoinError(f"duplicate score record for sample {key[0]!r}, system {key[1]!r}")
        by_key[key] = rec
    if not by_key:
        raise JoinError(f"no score records for aspect {aspect}")
    known = {(s.sample_id, o.system_id) for s in ds.samples for o in s.outputs}
    unmatched = sorted(k for k in by_key if k not in known)
    if unmatched:
        listing = ", ".join(f"{s}/{y}" for s, y in unmatched[:20])
        more = f" (+{len(unmatched) - 20} more)" if len(unmatched) > 20 else ""
        raise JoinError(f"{len(unmatched)} score records match no dataset output: {listing}{more}")
    groups, ids = [], []
    unscored = 0
    for sample in ds.samples:
        pairs = []
        for out in sample.outputs:
            rec = by_key.get((sample.sample_id, out.system_id))
            if rec is None:
                continue
            if aspect not in out.human_scores:
                unscored += 1
                continue
            pairs.append((rec.value, out.human_scores[aspect]))
        if pairs:
            groups.append(pairs)
            ids.append(sample.sample_id)
    if not groups:
        raise JoinError(f"no record joins a human score for aspect {aspect}")
    return PairedScores(groups, ids), {"joined": sum(len(g) for g in groups), "unscored": unscored}


def _uniform(records: Sequence[ScoreRecord], attr: str) -> str:
    values = {getattr(r, attr) for r in records}
    if len(values) == 1:
        v = values.pop()
        return v.value if hasattr(v, "value") else str(v)
    return "mixed"


def _csv_row(ds_name: str, aspect: str, records: Sequence[ScoreRecord], report: CorrelationReport, p_value=None) -> dict:
    return {
        "dataset": ds_name,
        "aspect": aspect,
        "model": _uniform(records, "model_id"),
        "setting": _uniform(records, "setting"),
        "kind": report.kind.value,
        "strategy": report.strategy.value,
        "value": repr(report.value),
        "p_value": "" if p_value is None else repr(p_value),
    }


def _write_csv(path: str | None, columns: list[str], rows: list[dict], append: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    target = Path(path) if path else None
    header = not (append and target is not None and target.exists() and target.stat().st_size > 0)
    if header:
        writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    if target is not None:
        with target.open("a" if append else "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


# --------------------------------------------------------------------------- commands


def _load_dataset(cfg: RunConfig) -> Dataset:
    return load(cfg.dataset, cfg.task)


def _require_model_backend(cfg: RunConfig, command: str) -> bk.BackendConfig:
    if cfg.backend is None:
        raise UsageError(f"{command} scores with a language model; --metric {cfg.metric} is not supported here")
    return cfg.backend


def _score_one(backend, templates, ds: Dataset, cfg: RunConfig, aspect: str, **kw) -> list[ScoreRecord]:
    if cfg.metric != "gptscore":
        return score_dataset_rouge(ds, cfg.metric, aspect)
    return score_dataset(
        backend,
        templates,
        ds,
        aspect,
        cfg.direction or ds.default_direction,
        kw.get("setting", cfg.setting),
        kw.get("k", cfg.k),
        cfg.seed,
        template_override=kw.get("template_override"),
    )


def cmd_score(cfg: RunConfig, out=None) -> dict:
    ds = _load_dataset(cfg)
    backend = bk.make_backend(cfg.backend) if cfg.metric == "gptscore" else None
    templates = _templates(cfg)
    records: list[ScoreRecord] = []
    for aspect in _aspects_for(cfg, ds):
        records.extend(_score_one(backend, templates, ds, cfg, aspect))
    if not cfg.output:
        raise UsageError("--out is required")
    n = write_records(records, cfg.output)
    summary = {
        "records": n,
        "output": cfg.output,
        "tokens": sum(r.token_count for r in records),
        "requests": backend.request_count if backend is not None else 0,
    }
    if isinstance(backend, bk.CachedBackend):
        summary.update(cache_hits=backend.stats.hits, cache_misses=backend.stats.misses,
                       cache_hit_rate=backend.stats.hit_rate)
    print(
        f"wrote {n} records to {cfg.output}; tokens={summary['tokens']} requests={summary['requests']}"
        + (f" cache_hit_rate={summary['cache_hit_rate']:.1%}" if "cache_hit_rate" in summary else ""),
        file=out or sys.stdout,
    )
    return summary


def cmd_metaeval(
    scores: str,
    dataset: str,
    kind: str = "Spearman",
    strategy: str | None = None,
    aspect: str | None = None,
    out_json: str | None = None,
    out_csv: str | None = None,
    task: str | None = None,
    out=None,
) -> dict:
    ds = load(dataset, task)
    records = read_records(scores)
    aspects = [aspect] if aspect else sorted({r.aspect for r in records})
    strat = Strategy.parse(strategy) if strategy else ds.default_strategy
    kind_ = CorrelationKind.parse(kind)
    reports, rows = [], []
    for asp in aspects:
        ps, info = build_paired(records, ds, asp)
        report = aggregate(ps, kind_, strat)
        subset = [r for r in records if r.aspect == asp]
        reports.append({"dataset": ds.name, "aspect": asp, **report.to_json(), **info})
        rows.append(_csv_row(ds.name, asp, subset, report))
    result = {"reports": reports}
    text = json.dumps(result, indent=2)
    if out_json:
        Path(out_json).write_text(text + "\n", encoding="utf-8")
    if out_csv:
        _write_csv(out_csv, METAEVAL_CSV_COLUMNS, rows, append=True)
    print(text, file=out or sys.stdout)
    return result


def cmd_ablate_demos(
    cfg: RunConfig,
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    kind: str = "Spearman",
    strategy: str | None = None,
    out=None,
) -> str:
    ds = _load_dataset(cfg)
    if not k_grid:
        raise UsageError("empty k grid")
    if min(k_grid) < 0:
        raise UsageError("k values must be >= 0")
    if max(k_grid) > len(ds.samples) - 1:
        raise UsageError(
            f"k={max(k_grid)} exceeds the demonstration pool ({len(ds.samples) - 1} other samples)"
        )
    aspects = _aspects_for(cfg, ds)
    backend = bk.make_backend(_require_model_backend(cfg, "ablate-demos"))
    templates = _templates(cfg)
    strat = Strategy.parse(strategy) if strategy else ds.default_strategy
    kind_ = CorrelationKind.parse(kind)
    rows = []
    for k in k_grid:
        for aspect in aspects:
            setting = Setting.IDM if k else Setting.IST
            records = _score_one(backend, templates, ds, cfg, aspect, setting=setting, k=k)
            ps, _ = build_paired(records, ds, aspect)
            rep = aggregate(ps, kind_, strat)
            rows.append({"k": k, "aspect": aspect, "kind": rep.kind.value, "strategy": rep.strategy.value,
                         "value": repr(rep.value), "n_used": rep.n_used})
    text = _write_csv(cfg.output, ["k", "aspect", "kind", "strategy", "value", "n_used"], rows)
    print(text, end="", file=out or sys.stdout)
    return text


def aspect_order(ds: Dataset, target: str, candidates: Sequence[str] | None = None) -> list[tuple[str, float]]:
    """Spearman between the target's human scores and each other aspect's, descending."""
    present = sorted({a for s in ds.samples for o in s.outputs for a in o.human_scores})
    if target not in present:
        raise JoinError(f"dataset has no human scores for {target}")
    result = []
    for other in candidates or present:
        if other == target:
            continue
        pairs = [
            (o.human_scores[target], o.human_scores[other])
            for s in ds.samples
            for o in s.outputs
            if target in o.human_scores and other in o.human_scores
        ]
        if len(pairs) < 2:
            continue
        try:
            value = spearman([p[0] for p in pairs], [p[1] for p in pairs])
        except DegenerateInputError:
            continue
        result.append((other, value))
    result.sort(key=lambda kv: (-kv[1], kv[0]))
    return result


def cmd_compose_aspects(
    cfg: RunConfig,
    target: str,
    extras_order: Sequence[str] | None = None,
    kind: str = "Spearman",
    strategy: str | None = None,
    order_out: str | None = None,
    out=None,
) -> tuple[str, str]:
    ds = _load_dataset(cfg)
    registry = builtin_registry()
    templates = _templates(cfg)
    order = aspect_order(ds, target, [a for a in registry.keys() if a != target])
    if extras_order is None:
        extras_order = [a for a, _ in order]
    direction = cfg.direction or ds.default_direction
    base = templates.get(ds.task, target, direction)
    backend = bk.make_backend(_require_model_backend(cfg, "compose-aspects"))
    strat = Strategy.parse(strategy) if strategy else ds.default_strategy
    kind_ = CorrelationKind.parse(kind)
    rows = []
    for x in range(1, len(extras_order) + 2):
        extras = list(extras_order[: x - 1])
        definition = compose_definition(registry, target, extras)
        tpl = base.with_definition(definition)
        records = _score_one(backend, templates, ds, cfg, target, template_override=tpl)
        ps, _ = build_paired(records, ds, target)
        rep = aggregate(ps, kind_, strat)
        rows.append({"x": x, "aspects": " ".join([target, *extras]), "definition": definition,
                     "value": repr(rep.value)})
    comp_text = _write_csv(cfg.output, ["x", "aspects", "definition", "value"], rows)
    order_rows = [{"aspect": a, "spearman": repr(v)} for a, v in order]
    order_text = _write_csv(order_out, ["aspect", "spearman"], order_rows)
    print(comp_text, end="", file=out or sys.stdout)
    print(order_text, end="", file=out or sys.stdout)
    return comp_text, order_text


def cmd_significance(
    scores_a: str,
    scores_b: str,
    dataset: str,
    aspect: str | None = None,
    kind: str = "Spearman",
    strategy: str | None = None,
    n_resamples: int = DEFAULT_RESAMPLES,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    n_jobs: int = 1,
    out_json: str | None = None,
    task: str | None = None,
    out=None,
) -> SignificanceResult:
    if n_resamples < 1:
        raise UsageError("number of resamples must be >= 1")
    if not 0 < alpha < 1:
        raise UsageError("alpha must be in (0, 1)")
    ds = load(dataset, task)
    ra, rb = read_records(scores_a), read_records(scores_b)
    if aspect is None:
        common = sorted({r.aspect for r in ra} & {r.aspect for r in rb})
        if len(common) != 1:
            raise UsageError(f"pass --aspect; score files share aspects {common}")
        aspect = common[0]
    pa, _ = build_paired(ra, ds, aspect)
    pb, _ = build_paired(rb, ds, aspect)
    strat = Strategy.parse(strategy) if strategy else ds.default_strategy
    res = bootstrap_compare(pa, pb, kind, strat, n_resamples, alpha, seed, n_jobs)
    text = json.dumps(res.to_json(), indent=2)
    if out_json:
        Path(out_json).write_text(text + "\n", encoding="utf-8")
    print(text, file=out or sys.stdout)
    return res


def cmd_report(manifest_path: str, out_path: str | None = None, out=None) -> str:
    """Markdown table of correlations per model with VAL / IST / IDM columns.

    IST and IDM cells get a dagger when they beat VAL significantly; IDM
    cells get a double dagger when they beat IST.
    """
    manifest_file = Path(manifest_path)
    try:
        manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read manifest: {exc}") from None
    root = manifest_file.parent
    ds = load(root / manifest["dataset"], manifest.get("task"))
    kind = CorrelationKind.parse(manifest.get("kind", "Spearman"))
    strat = Strategy.parse(manifest["strategy"]) if manifest.get("strategy") else ds.default_strategy
    B = int(manifest.get("resamples", DEFAULT_RESAMPLES))
    alpha = float(manifest.get("alpha", DEFAULT_ALPHA))
    seed = int(manifest.get("seed", 0))

    paired: dict[tuple[str, str, Setting], PairedScores] = {}
    models: list[str] = []
    aspects: list[str] = []
    for run in manifest["runs"]:
        setting = Setting.parse(run["setting"])
        records = read_records(root / run["scores"])
        ps, _ = build_paired(records, ds, run["aspect"])
        paired[(run["model"], run["aspect"], setting)] = ps
        if run["model"] not in models:
            models.append(run["model"])
        if run["aspect"] not in aspects:
            aspects.append(run["aspect"])
    settings = [s for s in Setting if any(key[2] is s for key in paired)]

    def cell(model: str, aspect: str, setting: Setting) -> str:
        ps = paired.get((model, aspect, setting))
        if ps is None:
            return "-"
        text = f"{100 * aggregate(ps, kind, strat).value:.1f}"
        baselines = {Setting.VAL: [], Setting.IST: [(Setting.VAL, "†")],
                     Setting.IDM: [(Setting.VAL, "†"), (Setting.IST, "‡")]}[setting]
        marks = []
        for baseline, mark in baselines:
            other = paired.get((model, aspect, baseline))
            if other is None:
                continue
            if bootstrap_compare(ps, other, kind, strat, B, alpha, seed).significant:
                marks.append(mark)
        return text + ("<sup>" + ",".join(marks) + "</sup>" if marks else "")

    header = ["Model"] + [f"{a} {s.value}" for a in aspects for s in settings]
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    for model in models:
        cells = [cell(model, a, s) for a in aspects for s in settings]
        lines.append("| " + " | ".join([model, *cells]) + " |")
    text = "\n".join(lines) + "\n"
    text += f"\n{kind.value}, {strat.value}, x100. † beats VAL, ‡ beats IST (paired bootstrap, B={B}, p<{alpha}).\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    print(text, end="", file=out or sys.stdout)
    return text


def cmd_cache(action: str, cache_dir: str, out=None) -> dict:
    if action == "stats":
        info = bk.cache_summary(cache_dir)
    elif action == "clear":
        info = {"removed": bk.cache_clear(cache_dir)}
    else:
        raise UsageError(f"unknown cache action {action!r}")
    print(json.dumps(info), file=out or sys.stdout)
    return info


# --------------------------------------------------------------------------- argparse


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [v for v in text.replace(" ", "").split(",") if v]


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its values")
    p.add_argument("--dataset", help="JSON-Lines dataset")
    p.add_argument("--task", help="expected task kind (Summ, MT, D2T, DiagTurn, DiagDialog)")
    p.add_argument("--aspect", action="append", help="aspect key (repeatable)")
    p.add_argument("--direction", help="SrcToHypo, RefToHypo, HypoToRef, RefBidir or BooleanQA")
    p.add_argument("--setting", choices=["val", "ist", "idm", "VAL", "IST", "IDM"])
    p.add_argument("--k", type=int, help="number of demonstrations (idm only)")
    p.add_argument("--seed", type=int)
    p.add_argument("--templates", help="template registry JSON (default: builtin)")
    p.add_argument("--out", help="output file")
    g = p.add_argument_group("backend")
    g.add_argument("--backend", choices=[k.value for k in bk.BackendKind])
    g.add_argument("--model", help="model id sent to the endpoint")
    g.add_argument("--endpoint", help="base URL of an OpenAI-compatible server")
    g.add_argument("--fixture", help="fixture backend JSON file")
    g.add_argument("--corpus", help="unigram backend corpus file")
    g.add_argument("--cache-dir", dest="cache_dir")
    g.add_argument("--max-parallel", dest="max_parallel", type=int)
    g.add_argument("--max-attempts", dest="max_attempts", type=int)
    g.add_argument("--backoff", type=float, help="base retry backoff in seconds")
    g.add_argument("--offset-unit", dest="offset_unit", choices=["byte", "char"])
    g.add_argument("--boundary", choices=["strict", "whitespace"],
                   help="whitespace: accept a first target token that carries the prefix's trailing space")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gptscore", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score a dataset and write ScoreRecords (JSON-Lines)")
    _add_run_args(p)
    p.add_argument("--metric", choices=["gptscore", *ROUGE_METRICS], help="gptscore (default) or a ROUGE baseline")

    p = sub.add_parser("metaeval", help="correlate score records with human judgments")
    p.add_argument("--scores", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--task")
    p.add_argument("--aspect")
    p.add_argument("--kind", default="Spearman", choices=["Spearman", "Pearson", "spearman", "pearson"])
    p.add_argument("--strategy", help="SampleLevel or DatasetLevel (default: dataset's)")
    p.add_argument("--out-json", dest="out_json")
    p.add_argument("--out-csv", dest="out_csv", help="append a row per aspect")

    p = sub.add_parser("ablate-demos", help="correlation as a function of the demonstration count K")
    _add_run_args(p)
    p.add_argument("--k-grid", dest="k_grid", type=_int_list, help="default 0,1,2,4,8,12")
    p.add_argument("--kind", default="Spearman")
    p.add_argument("--strategy")

    p = sub.add_parser("compose-aspects", help="merge other aspect definitions into a target aspect")
    _add_run_args(p)
    p.add_argument("--target", required=True)
    p.add_argument("--extras", type=_str_list, help="comma-separated order (default: aspect order from human scores)")
    p.add_argument("--order-out", dest="order_out", help="CSV for the aspect-order table")
    p.add_argument("--kind", default="Spearman")
    p.add_argument("--strategy")

    p = sub.add_parser("significance", help="paired bootstrap: does metric A beat metric B?")
    p.add_argument("--scores-a", dest="scores_a", required=True)
    p.add_argument("--scores-b", dest="scores_b", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--task")
    p.add_argument("--aspect")
    p.add_argument("--kind", default="Spearman")
    p.add_argument("--strategy")
    p.add_argument("-B", "--resamples", type=int, default=DEFAULT_RESAMPLES)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("report", help="Markdown VAL/IST/IDM table with significance markers")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")

    p = sub.add_parser("cache", help="inspect or clear the response cache")
    p.add_argument("action", choices=["stats", "clear"])
    p.add_argument("--cache-dir", dest="cache_dir", required=True)
    return parser


def _dispatch(args: argparse.Namespace) -> None:
    cmd = args.command
    if cmd == "score":
        cmd_score(run_config(_merged(args)))
    elif cmd == "metaeval":
        cmd_metaeval(args.scores, args.dataset, args.kind, args.strategy, args.aspect, args.out_json, args.out_csv,
                     args.task)
    elif cmd == "ablate-demos":
        opts = _merged(args)
        grid = opts.get("k_grid") or list(DEFAULT_K_GRID)
        opts.pop("k", None)
        cfg = run_config(opts)
        cmd_ablate_demos(cfg, grid, opts.get("kind", "Spearman"), opts.get("strategy"))
    elif cmd == "compose-aspects":
        opts = _merged(args)
        cfg = run_config(opts)
        cmd_compose_aspects(cfg, opts["target"], opts.get("extras"), opts.get("kind", "Spearman"),
                            opts.get("strategy"), opts.get("order_out"))
    elif cmd == "significance":
        cmd_significance(args.scores_a, args.scores_b, args.dataset, args.aspect, args.kind, args.strategy,
                         args.resamples, args.alpha, args.seed, args.jobs, args.out, args.task)
    elif cmd == "report":
        cmd_report(args.manifest, args.out)
    elif cmd == "cache":
        cmd_cache(args.action, args.cache_dir)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _dispatch(args)
    except UsageError as exc:
        print(f"gptscore: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (bk.BackendError, ScoringError) as exc:
        print(f"gptscore: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DatasetError, JoinError, PromptError, AspectError, DegenerateInputError, BootstrapError,
            OSError, ValueError, KeyError) as exc:
        print(f"gptscore: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
