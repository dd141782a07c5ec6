"""Command-line pipeline: extract | geninputs | execute | build | eval | stats | run.

Each stage reads and writes JSON-Lines under the output directory and
drops a manifest recording input/output digests and counters. A stage
whose inputs and config are unchanged is skipped on re-run, so an
interrupted pipeline resumes cleanly.

Exit codes: 0 success, 2 configuration error, 3 upstream dependency failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import corpus as corpus_mod
from . import dataset as dataset_mod
from . import evalharness as eval_mod
from . import execution as exec_mod
from . import inputgen as inputgen_mod
from .config import AUTH_TOKEN_ENV, PipelineConfig, load_config
from .corpus import ConfigError, DedupIndex, FunctionRecord, RejectReason

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UPSTREAM = 3

STAGES = ("extract", "geninputs", "execute", "build")


# ---------------------------------------------------------------------------
# Manifests and resume
# ---------------------------------------------------------------------------

def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _digest_many(paths: list[Path]) -> str:
    h = hashlib.sha256()
    for path in paths:
        h.update(path.name.encode())
        h.update(_file_digest(path).encode())
    return h.hexdigest()[:16]


def _digest_tree(roots: list[str]) -> str:
    """Content digest of every corpus file under the given roots."""
    h = hashlib.sha256()
    for root in roots:
        root = Path(root)
        files = sorted(root.rglob("*.py"), key=lambda p: p.as_posix()) if root.is_dir() else [root]
        for path in files:
            if path.is_file():
                h.update(path.as_posix().encode())
                h.update(_file_digest(path).encode())
    return h.hexdigest()[:16]


def _manifest_path(out_dir: Path, stage: str) -> Path:
    return out_dir / f"{stage}.manifest.json"


def write_manifest(out_dir: Path, stage: str, input_digest: str, outputs: list[Path],
                   counts: dict, wall_time_s: float, config_hash: str) -> None:
    manifest = {
        "stage": stage,
        "input_digest": input_digest,
        "output_digest": _digest_many(outputs),
        "counts": counts,
        "wall_time_s": round(wall_time_s, 3),
        "config_hash": config_hash,
    }
    _manifest_path(out_dir, stage).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_manifest(out_dir: Path, stage: str) -> dict | None:
    path = _manifest_path(out_dir, stage)
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None


def stage_is_current(out_dir: Path, stage: str, input_digest: str, outputs: list[Path],
                     config_hash: str) -> bool:
    manifest = read_manifest(out_dir, stage)
    if manifest is None:
        return False
    if manifest.get("input_digest") != input_digest or manifest.get("config_hash") != config_hash:
        return False
    if not all(p.exists() for p in outputs):
        return False
    return manifest.get("output_digest") == _digest_many(outputs)


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def _write_jsonl(path: Path, objs) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Stage: extract
# ---------------------------------------------------------------------------

def cmd_extract(cfg: PipelineConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    config_hash = cfg.content_hash()

    if not cfg.corpus_roots:
        log.error("no corpus roots configured")
        return EXIT_CONFIG
    for root in cfg.corpus_roots:
        if not Path(root).exists():
            log.error("corpus root does not exist: %s", root)
            return EXIT_CONFIG

    input_digest = _digest_tree(cfg.corpus_roots + cfg.benchmark_roots)
    if stage_is_current(out_dir, "extract", input_digest, [records_path], config_hash):
        log.info("extract: up to date, skipping")
        return EXIT_OK

    t0 = time.monotonic()
    stats = corpus_mod.CorpusStats()
    allowlist = frozenset(cfg.module_allowlist)
    deny_calls = frozenset(cfg.deny_call_names)
    deny_attrs = tuple(cfg.deny_attr_prefixes)
    deco_allow = frozenset(cfg.decorator_allowlist)

    index = _build_dedup_index(cfg)

    docs = list(corpus_mod.ingest_sources(cfg.corpus_roots, stats))

    def process(doc):
        # Per-doc stats; counter increments are not atomic across threads.
        local = corpus_mod.CorpusStats()
        return corpus_mod.extract_functions(doc, local), local

    if cfg.jobs > 1 and len(docs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            per_doc = list(pool.map(process, docs))
    else:
        per_doc = [process(doc) for doc in docs]

    for _, local in per_doc:
        stats.parse_failed_docs += local.parse_failed_docs
        stats.syntax_segments += local.syntax_segments

    records: list[FunctionRecord] = [rec for batch, _ in per_doc for rec in batch]
    records.sort(key=lambda r: r.order_key)

    seen_ids: set[str] = set()
    finished: list[FunctionRecord] = []
    counts = {reason.value: 0 for reason in RejectReason}
    accepted = 0
    for rec in records:
        rec = corpus_mod.check_self_contained(
            rec,
            allowlist=allowlist,
            deny_call_names=deny_calls,
            deny_attr_prefixes=deny_attrs,
            decorator_allowlist=deco_allow,
            source_char_cap=cfg.source_char_cap,
        )
        if rec.accepted:
            rec = corpus_mod.dedup_filter(rec, index)
        if rec.accepted:
            if rec.fn_id in seen_ids:
                rec = dataclasses.replace(rec, reject_reason=RejectReason.DUPLICATE)
            else:
                seen_ids.add(rec.fn_id)
        if rec.accepted:
            accepted += 1
        else:
            counts[rec.reject_reason.value] += 1
        finished.append(rec)

    _write_jsonl(records_path, (r.to_json() for r in finished))
    stage_counts = {
        **stats.as_dict(),
        "functions_found": len(finished),
        "accepted": accepted,
        "rejected": {k: v for k, v in sorted(counts.items()) if v},
    }
    write_manifest(out_dir, "extract", input_digest, [records_path], stage_counts,
                   time.monotonic() - t0, config_hash)
    if not finished:
        log.warning("extract: corpus yielded no functions")
    log.info("extract: %d functions, %d accepted", len(finished), accepted)
    return EXIT_OK


def _build_dedup_index(cfg: PipelineConfig) -> DedupIndex:
    items: dict[str, str] = {}
    for root in cfg.benchmark_roots:
        root = Path(root)
        if not root.exists():
            raise ConfigError(f"benchmark root does not exist: {root}")
        paths = sorted(root.rglob("*.py")) if root.is_dir() else [root]
        for path in paths:
            try:
                items[path.as_posix()] = path.read_text(encoding="utf-8")
            except UnicodeDecodeError:
                continue
    return DedupIndex.build(items, cfg.jaccard_threshold, cfg.shingle_size)


def _load_records(out_dir: Path) -> list[FunctionRecord]:
    path = out_dir / "records.jsonl"
    if not path.exists():
        raise FileNotFoundError(path)
    return [FunctionRecord.from_json(obj) for obj in _read_jsonl(path)]


# ---------------------------------------------------------------------------
# Stage: geninputs
# ---------------------------------------------------------------------------

def cmd_geninputs(cfg: PipelineConfig) -> int:
    out_dir = Path(cfg.out_dir)
    records_path = out_dir / "records.jsonl"
    cases_path = out_dir / "cases.jsonl"
    config_hash = cfg.content_hash()

    if not records_path.exists():
        log.error("geninputs: missing %s (run extract first)", records_path)
        return EXIT_UPSTREAM
    input_digest = _digest_many([records_path])
    if stage_is_current(out_dir, "geninputs", input_digest, [cases_path], config_hash):
        log.info("geninputs: up to date, skipping")
        return EXIT_OK

    t0 = time.monotonic()
    accepted = [r for r in _load_records(out_dir) if r.accepted]
    writer_cfg = cfg.writer_config()
    cache = inputgen_mod.ReplayCache(cfg.cache_dir) if cfg.cache_dir else None
    parse_stats = inputgen_mod.ParseStats()
    mode = cfg.generator

    client = None
    if mode in {"llm", "mixed"}:
        client = inputgen_mod.HttpCompletionClient(auth_token=os.environ.get(AUTH_TOKEN_ENV))

    def gen_one(rec: FunctionRecord):
        if mode == "fallback":
            return rec.fn_id, inputgen_mod.generate_inputs_fallback(rec, cfg.seed, cfg.fallback_k), False, None
        # Per-call stats; merged after the pool joins (counter increments
        # are not atomic across threads).
        local_stats = inputgen_mod.ParseStats()
        cases = inputgen_mod.generate_inputs_llm(rec, writer_cfg, client, cache, local_stats)
        fellback = False
        if not cases and mode == "mixed":
            cases = inputgen_mod.generate_inputs_fallback(rec, cfg.seed, cfg.fallback_k)
            fellback = True
        return rec.fn_id, cases, fellback, local_stats

    if mode == "fallback" or cfg.jobs == 1:
        results = [gen_one(rec) for rec in accepted]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(gen_one, accepted))
    for _, _, _, local_stats in results:
        if local_stats is not None:
            parse_stats.responses += local_stats.responses
            parse_stats.no_block += local_stats.no_block
            parse_stats.dropped_entries += local_stats.dropped_entries
    results = [(fn_id, cases, fellback) for fn_id, cases, fellback, _ in results]

    rows = []
    failures = 0
    fallback_tagged = 0
    for fn_id, cases, fellback in results:
        if not cases:
            failures += 1
        fallback_tagged += int(fellback)
        rows.append({
            "fn_id": fn_id,
            "cases": [c.to_json() for c in cases],
        })

    if mode == "llm" and accepted and failures == len(accepted):
        log.error("geninputs: no inputs for any of %d functions (endpoint down and cache cold?)", failures)
        _write_jsonl(out_dir / "geninputs.failures.jsonl",
                     ({"fn_id": fn_id, "cases": 0} for fn_id, cases, _ in results if not cases))
        return EXIT_UPSTREAM

    _write_jsonl(cases_path, rows)
    counts = {
        "functions_in": len(accepted),
        "functions_with_cases": sum(1 for _, cases, _ in results if cases),
        "functions_without_cases": failures,
        "fallback_tagged": fallback_tagged,
        "cases_total": sum(len(cases) for _, cases, _ in results),
        "parse_no_block": parse_stats.no_block,
        "parse_dropped_entries": parse_stats.dropped_entries,
        "generator": mode,
    }
    write_manifest(out_dir, "geninputs", input_digest, [cases_path], counts,
                   time.monotonic() - t0, config_hash)
    log.info("geninputs: %d/%d functions have cases", counts["functions_with_cases"], len(accepted))
    return EXIT_OK


def _load_cases(out_dir: Path) -> dict[str, list[inputgen_mod.InputCase]]:
    path = out_dir / "cases.jsonl"
    if not path.exists():
        raise FileNotFoundError(path)
    out = {}
    for obj in _read_jsonl(path):
        out[obj["fn_id"]] = [inputgen_mod.InputCase.from_json(c) for c in obj["cases"]]
    return out


# ---------------------------------------------------------------------------
# Stage: execute
# ---------------------------------------------------------------------------

def _make_executor(cfg: PipelineConfig):
    if cfg.stub_table:
        table = exec_mod.load_stub_table(cfg.stub_table)
        return exec_mod.stub_executor(table), lambda: None
    pool = exec_mod.WorkerPoolExecutor(
        pool_size=cfg.jobs,
        worker_cmd=cfg.worker_cmd,
        max_requests_per_worker=cfg.max_requests_per_worker,
        cpu_seconds=cfg.cpu_seconds,
        address_space_bytes=max(cfg.memory_bytes * 2, 512 * 2**20),
        allow_modules=cfg.module_allowlist,
    )
    return pool, pool.close


def cmd_execute(cfg: PipelineConfig) -> int:
    out_dir = Path(cfg.out_dir)
    records_path = out_dir / "records.jsonl"
    cases_path = out_dir / "cases.jsonl"
    casesets_path = out_dir / "casesets.jsonl"
    config_hash = cfg.content_hash()

    for needed in (records_path, cases_path):
        if not needed.exists():
            log.error("execute: missing %s", needed)
            return EXIT_UPSTREAM
    input_digest = _digest_many([records_path, cases_path])
    if stage_is_current(out_dir, "execute", input_digest, [casesets_path], config_hash):
        log.info("execute: up to date, skipping")
        return EXIT_OK

    t0 = time.monotonic()
    records = {r.fn_id: r for r in _load_records(out_dir) if r.accepted}
    cases_by_fn = _load_cases(out_dir)
    executor, closer = _make_executor(cfg)
    limits = cfg.limits()

    ordered = [(fn_id, cases) for fn_id, cases in cases_by_fn.items() if fn_id in records]

    def run_one(item):
        fn_id, cases = item
        if not cases:
            return fn_id, None
        return fn_id, exec_mod.execute_all(records[fn_id], cases, executor, limits)

    try:
        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as tpool:
                results = list(tpool.map(run_one, ordered))
        else:
            results = [run_one(item) for item in ordered]
    finally:
        closer()

    verdict_counts: dict[str, int] = {}
    skipped_no_cases = 0
    rows = []
    for fn_id, caseset in results:
        if caseset is None:
            skipped_no_cases += 1
            continue
        verdict_counts[caseset.verdict.value] = verdict_counts.get(caseset.verdict.value, 0) + 1
        rows.append(caseset.to_json())

    _write_jsonl(casesets_path, rows)
    counts = {
        "functions_in": len(ordered),
        "skipped_no_cases": skipped_no_cases,
        "executed_cases": sum(len(r["outcomes"]) for r in rows),
        "verdicts": dict(sorted(verdict_counts.items())),
    }
    write_manifest(out_dir, "execute", input_digest, [casesets_path], counts,
                   time.monotonic() - t0, config_hash)
    log.info("execute: %s", counts["verdicts"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# Stage: build
# ---------------------------------------------------------------------------

def cmd_build(cfg: PipelineConfig, eval_extras: bool = False) -> int:
    out_dir = Path(cfg.out_dir)
    records_path = out_dir / "records.jsonl"
    casesets_path = out_dir / "casesets.jsonl"
    train_path = out_dir / "train.jsonl"
    eval_path = out_dir / "eval.jsonl"
    config_hash = cfg.content_hash()

    for needed in (records_path, casesets_path):
        if not needed.exists():
            log.error("build: missing %s", needed)
            return EXIT_UPSTREAM
    input_digest = _digest_many([records_path, casesets_path])
    outputs = [train_path, eval_path]
    if not eval_extras and stage_is_current(out_dir, "build", input_digest, outputs, config_hash):
        log.info("build: up to date, skipping")
        return EXIT_OK

    t0 = time.monotonic()
    try:
        templates = dataset_mod.load_templates(cfg.template_dir)
    except dataset_mod.TemplateError as exc:
        log.error("build: %s", exc)
        return EXIT_CONFIG

    records = {r.fn_id: r for r in _load_records(out_dir) if r.accepted}
    casesets = [exec_mod.FunctionCaseSet.from_json(obj) for obj in _read_jsonl(casesets_path)]
    pairs = [
        (records[cs.fn_id], cs)
        for cs in casesets
        if cs.verdict == exec_mod.Verdict.VALID and cs.fn_id in records
    ]
    if cfg.holdout_count and cfg.holdout_count >= len(pairs):
        log.error("build: holdout_count=%d but only %d valid pairs", cfg.holdout_count, len(pairs))
        return EXIT_CONFIG

    m_policy = dataset_mod.MPolicy(min_m=cfg.m_min, fixed_m=cfg.m_fixed)
    provider = None
    closer = lambda: None
    if eval_extras and cfg.eval_extra_inputs > 0:
        executor, closer = _make_executor(cfg)
        provider = _extra_inputs_provider(cfg, executor)
    try:
        stats = dataset_mod.build_dataset(
            pairs, templates, cfg.seed, cfg.holdout_count, out_dir,
            m_policy=m_policy, extra_inputs_provider=provider, config_hash=config_hash,
        )
    except ValueError as exc:
        log.error("build: %s", exc)
        return EXIT_CONFIG
    finally:
        closer()

    counts = {**stats.as_dict(), "valid_pairs": len(pairs), "casesets_in": len(casesets)}
    write_manifest(out_dir, "build", input_digest, outputs, counts,
                   time.monotonic() - t0, config_hash)
    log.info("build: %d train / %d eval samples", stats.train, stats.eval)
    return EXIT_OK


def _extra_inputs_provider(cfg: PipelineConfig, executor):
    """Second input pass over EVAL functions: generate, execute, merge.

    Uses the eval writer when an endpoint is configured, the seeded
    fallback otherwise; only OK/EXCEPTION outcomes join the holdout.
    """
    k = cfg.eval_extra_inputs
    eval_writer = dict(cfg.writer)
    eval_writer.update(cfg.eval_writer)
    use_llm = bool(eval_writer.get("endpoint_url")) and cfg.generator != "fallback"
    client = inputgen_mod.HttpCompletionClient(os.environ.get(AUTH_TOKEN_ENV)) if use_llm else None
    cache = inputgen_mod.ReplayCache(cfg.cache_dir) if (use_llm and cfg.cache_dir) else None
    writer_cfg = cfg.writer_config(cfg.eval_writer) if use_llm else None

    def provider(rec) -> list[exec_mod.CaseOutcome]:
        if use_llm:
            cases = inputgen_mod.generate_inputs_llm(rec, writer_cfg, client, cache)
        else:
            cases = []
        if not cases:
            cases = inputgen_mod.generate_inputs_fallback(rec, cfg.seed + 10007, k)
        outcomes = []
        for case in cases[:k]:
            req = exec_mod.ExecRequest(fn_id=rec.fn_id, source=rec.source, fn_name=rec.name,
                                       case=case, limits=cfg.limits())
            try:
                outcome = executor.submit(req)
            except Exception:
                continue
            if outcome.status in (exec_mod.Status.OK, exec_mod.Status.EXCEPTION):
                outcomes.append(outcome)
        return outcomes

    return provider


# ---------------------------------------------------------------------------
# Stage: eval
# ---------------------------------------------------------------------------

def cmd_eval(cfg: PipelineConfig, completions_path: str | None) -> int:
    out_dir = Path(cfg.out_dir)
    eval_path = out_dir / "eval.jsonl"
    config_hash = cfg.content_hash()

    if not eval_path.exists():
        log.error("eval: missing %s (run build first)", eval_path)
        return EXIT_UPSTREAM

    try:
        templates = {t.template_id: t for t in dataset_mod.load_templates(cfg.template_dir)}
    except dataset_mod.TemplateError as exc:
        log.error("eval: %s", exc)
        return EXIT_CONFIG

    samples = [dataset_mod.TrainingSample.from_json(obj) for obj in _read_jsonl(eval_path)]
    tasks = {s.sample_id: eval_mod.render_eval_prompt(s, templates) for s in samples}

    if completions_path is not None:
        completions_file = Path(completions_path)
        if not completions_file.exists():
            log.error("eval: completions file not found: %s", completions_file)
            return EXIT_CONFIG
        completions = {obj["sample_id"]: obj.get("completion", "")
                       for obj in _read_jsonl(completions_file)}
    elif cfg.writer.get("endpoint_url"):
        completions_file = out_dir / "completions.jsonl"
        completions = _fetch_completions(cfg, tasks, completions_file)
        if completions is None:
            return EXIT_UPSTREAM
    else:
        log.error("eval: need --completions or a writer endpoint in the config")
        return EXIT_CONFIG

    executor, closer = _make_executor(cfg)
    t0 = time.monotonic()
    verdicts = []
    template_by_sample = {}
    try:
        for sample in samples:
            template_by_sample[sample.sample_id] = sample.template_id
            task = tasks[sample.sample_id]
            candidate = eval_mod.extract_program(completions.get(sample.sample_id, ""), task.fn_name)
            verdicts.append(eval_mod.judge_candidate(task, candidate, executor, cfg.limits(), cfg.rel_tol))
    finally:
        closer()

    verdicts.sort(key=lambda v: v.sample_id)
    _write_jsonl(out_dir / "verdicts.jsonl", (v.to_json() for v in verdicts))
    report = eval_mod.score_run(verdicts, template_by_sample)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    print(eval_mod.format_report(report))
    write_manifest(out_dir, "eval", _digest_many([eval_path, completions_file]),
                   [out_dir / "verdicts.jsonl", out_dir / "report.json"],
                   {"total": report["total"], "passes": report["passes"]},
                   time.monotonic() - t0, config_hash)
    return EXIT_OK


def _fetch_completions(cfg: PipelineConfig, tasks: dict, out_path: Path) -> dict[str, str] | None:
    """Query the configured endpoint once per task with greedy decoding."""
    greedy = cfg.writer_config({"temperature": 0.0, "top_p": 1.0})
    client = inputgen_mod.HttpCompletionClient(auth_token=os.environ.get(AUTH_TOKEN_ENV))
    completions: dict[str, str] = {}
    failures = 0

    def fetch(item):
        sample_id, task = item
        try:
            return sample_id, client.complete(task.prompt, greedy)
        except inputgen_mod.TransportError as exc:
            log.debug("eval completion failed for %s: %s", sample_id, exc)
            return sample_id, None

    items = sorted(tasks.items())
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(fetch, items))
    else:
        results = [fetch(item) for item in items]
    for sample_id, completion in results:
        if completion is None:
            failures += 1
            completions[sample_id] = ""
        else:
            completions[sample_id] = completion
    if tasks and failures == len(tasks):
        log.error("eval: endpoint produced no completions (%d failures)", failures)
        return None
    _write_jsonl(out_path, ({"sample_id": sid, "completion": completions[sid]}
                            for sid, _ in items))
    return completions


# ---------------------------------------------------------------------------
# Stage: stats
# ---------------------------------------------------------------------------

def cmd_stats(out_dir: str) -> int:
    out = Path(out_dir)
    rows = []
    missing = []
    for stage in STAGES:
        manifest = read_manifest(out, stage)
        if manifest is None:
            missing.append(stage)
            continue
        rows.append((stage, manifest.get("counts", {})))

    if not rows:
        print(f"no stage manifests under {out}")
        return EXIT_UPSTREAM

    print(f"pipeline funnel for {out}")
    for stage, counts in rows:
        print(f"\n[{stage}]")
        _print_counts(counts)
        ratio = _retention(stage, counts)
        if ratio is not None:
            print(f"  retention: {ratio:.3f}")
    if missing:
        print(f"\nwarning: missing manifests for: {', '.join(missing)}")
    return EXIT_OK


def _print_counts(counts: dict, indent: str = "  ") -> None:
    for key, value in counts.items():
        if isinstance(value, dict):
            print(f"{indent}{key}:")
            _print_counts(value, indent + "  ")
        else:
            print(f"{indent}{key}: {value}")


def _retention(stage: str, counts: dict) -> float | None:
    pairs = {
        "extract": ("functions_found", "accepted"),
        "geninputs": ("functions_in", "functions_with_cases"),
        "execute": ("functions_in", None),
        "build": ("pairs_in", "samples"),
    }
    num_key: str | None
    den_key, num_key = pairs.get(stage, (None, None))
    if den_key is None or not counts.get(den_key):
        return None
    if stage == "execute":
        valid = counts.get("verdicts", {}).get("VALID", 0)
        return valid / counts[den_key]
    return counts.get(num_key, 0) / counts[den_key]


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON pipeline config file")
    parser.add_argument("--seed", type=int, help="override sampling seed")
    parser.add_argument("--out", help="override output directory")
    parser.add_argument("--jobs", type=int, help="override parallelism")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="casegen",
        description="Mine functions, synthesize input-output cases, and build/evaluate induction samples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("extract", "mine candidate functions from the corpus"),
        ("geninputs", "generate candidate inputs per function"),
        ("execute", "run functions on their inputs and classify validity"),
        ("build", "render train/eval samples from valid case sets"),
        ("eval", "judge candidate completions against held-out cases"),
        ("run", "run extract, geninputs, execute, and build in order"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in {"geninputs", "run"}:
            p.add_argument("--generator", choices=["llm", "fallback", "mixed"],
                           help="input generator mode")
            p.add_argument("--fallback", action="store_true",
                           help="shorthand for --generator fallback")
        if name in {"execute", "eval", "run"}:
            p.add_argument("--stub", help="stub executor table (JSON-Lines)")
        if name == "build":
            p.add_argument("--eval-extras", action="store_true",
                           help="generate and execute extra judge inputs for EVAL functions")
        if name == "eval":
            p.add_argument("--completions", help="completions file (JSON-Lines {sample_id, completion})")

    p = sub.add_parser("stats", help="print the pipeline funnel from stage manifests")
    p.add_argument("out_dir", nargs="?", help="output directory (defaults to config out_dir)")
    _add_common(p)
    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "out_dir": getattr(args, "out", None),
        "jobs": getattr(args, "jobs", None),
        "stub_table": getattr(args, "stub", None),
    }
    generator = getattr(args, "generator", None)
    if getattr(args, "fallback", False):
        generator = "fallback"
    overrides["generator"] = generator
    return load_config(getattr(args, "config", None), overrides)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("CASEGEN_LOGLEVEL", "INFO"),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    try:
        if args.command == "stats":
            if args.out_dir:
                return cmd_stats(args.out_dir)
            cfg = _config_from_args(args)
            return cmd_stats(cfg.out_dir)
        cfg = _config_from_args(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG

    try:
        if args.command == "extract":
            return cmd_extract(cfg)
        if args.command == "geninputs":
            return cmd_geninputs(cfg)
        if args.command == "execute":
            return cmd_execute(cfg)
        if args.command == "build":
            return cmd_build(cfg, eval_extras=getattr(args, "eval_extras", False))
        if args.command == "eval":
            return cmd_eval(cfg, args.completions)
        if args.command == "run":
            for stage_fn in (cmd_extract, cmd_geninputs, cmd_execute, cmd_build):
                code = stage_fn(cfg)
                if code != EXIT_OK:
                    return code
            return EXIT_OK
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        log.error("missing input: %s", exc)
        return EXIT_UPSTREAM
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
