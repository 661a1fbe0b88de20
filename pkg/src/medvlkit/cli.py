"""Command-line entry point: ingest -> build -> infer -> score -> report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .client import ChatClient, EndpointConfig, PredictionCache, RunStats, run_inference, run_synthesis
from .client.mock import EchoResponder, MockChatServer
from .core import SPLITS, read_predictions, read_samples, write_jsonl, write_predictions, write_samples
from .dataengine import (
    SplitCounts,
    build_sft,
    check_splits,
    find_manifests,
    ingest,
    load_manifest,
    plan_alignment,
    read_pool,
    write_sft,
)
from .errors import AuthFailed, ConfigError, MedVLError
from .metrics import MetricReport
from .scoring import score_corpus
from .tables import write_report
from .templates import render

log = logging.getLogger("medvlkit")

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2
STAGES = ("ingest", "build_sft", "render", "infer", "score", "report")


class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        d = {
            "ts": round(record.created, 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "event": record.getMessage(),
        }
        d.update(getattr(record, "fields", {}))
        if record.exc_info:
            d["exc"] = self.formatException(record.exc_info)
        return json.dumps(d, ensure_ascii=False)


def setup_logging(level: str = "info") -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    # one line per HTTP request is noise at batch scale
    logging.getLogger("httpx").setLevel(logging.WARNING)


def event(msg: str, level: int = logging.INFO, **fields) -> None:
    log.log(level, msg, extra={"fields": fields})


# --- commands ------------------------------------------------------------


def _manifest_paths(args) -> list[Path]:
    paths = [Path(p) for p in (args.manifest or [])]
    if getattr(args, "manifests", None):
        paths.extend(find_manifests(args.manifests))
    if not paths:
        raise ConfigError("no manifests given (use --manifest or --manifests)")
    return paths


def do_ingest(manifest_paths: Sequence[Path], out_dir: Path) -> dict:
    """Write ``<dataset>.<split>.jsonl`` files plus ``splits.json``; returns the split report."""
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {}
    for mp in manifest_paths:
        m = load_manifest(mp)
        counts = dict.fromkeys(SPLITS, 0)
        for split in SPLITS:
            if split not in m.split_paths:
                continue
            target = out_dir / f"{m.dataset_id}.{split}.jsonl"
            counts[split] = write_samples(target, ingest(m, [split]))
        entry = {"counts": counts, "mismatches": []}
        if m.expected is not None:
            mismatches = check_splits(SplitCounts(**counts), m.expected)
            entry["expected"] = m.expected.to_dict()
            entry["mismatches"] = [x.to_dict() for x in mismatches]
            for x in mismatches:
                event("split count mismatch", logging.WARNING, dataset=m.dataset_id, **x.to_dict())
        event("ingested", dataset=m.dataset_id, **counts)
        report[m.dataset_id] = entry
    (out_dir / "splits.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def cmd_ingest(args) -> int:
    do_ingest(_manifest_paths(args), Path(args.out))
    return EXIT_OK


def _endpoint(args, base: Optional[dict] = None) -> EndpointConfig:
    d = dict(base or {})
    if getattr(args, "endpoint", None):
        d["base_url"] = args.endpoint
    if getattr(args, "model", None):
        d["model_id"] = args.model
    if getattr(args, "parallelism", None):
        d["parallelism"] = args.parallelism
    if getattr(args, "api_key_env", None):
        d["api_key_env"] = args.api_key_env
    if getattr(args, "max_rps", None):
        d["max_rps"] = args.max_rps
    if not d.get("base_url"):
        raise ConfigError("an endpoint is required (--endpoint or config 'endpoint.base_url')")
    d.setdefault("model_id", "default")
    return EndpointConfig.from_dict(d)


def cmd_build_align(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pool = read_pool(args.pool)
    paired, jobs = plan_alignment(pool, args.seed, args.synthetic_fraction, args.group_size)
    write_jsonl(out / "paired.jsonl", (s.to_dict() for s in paired))
    write_jsonl(out / "jobs.jsonl", (j.to_dict() for j in jobs))
    event("alignment planned", paired=len(paired), jobs=len(jobs), seed=args.seed)
    if args.endpoint:
        cfg = _endpoint(args)
        cache = PredictionCache(args.cache_dir) if args.cache_dir else None
        stats = RunStats()
        synthetic = run_synthesis(jobs, cfg, cache, stats=stats)
        write_jsonl(out / "synthetic.jsonl", (s.to_dict() for s in synthetic))
        event("synthesis finished", **stats.to_dict())
        return EXIT_PARTIAL if stats.failures else EXIT_OK
    return EXIT_OK


def do_build_sft(manifest_paths, seed: int, out: Path, chat_format: str) -> int:
    manifests = [load_manifest(p) for p in manifest_paths]
    streams = (ingest(m, ["train"]) for m in manifests)
    n = write_sft(out, build_sft(streams, seed, chat_format=chat_format))
    event("sft corpus written", records=n, seed=seed, path=str(out))
    return n


def cmd_build_sft(args) -> int:
    do_build_sft(_manifest_paths(args), args.seed, Path(args.out), args.chat_format)
    return EXIT_OK


def do_render(samples, out: Path, chat_format: str) -> int:
    return write_jsonl(out, (render(s).to_record(chat_format) for s in samples))


def cmd_render(args) -> int:
    do_render(read_samples(args.corpus), Path(args.out), args.chat_format)
    return EXIT_OK


def do_infer(samples, cfg: EndpointConfig, out: Path, cache_dir: Optional[str]) -> RunStats:
    cache = PredictionCache(cache_dir) if cache_dir else None
    stats = RunStats()
    with ChatClient(cfg) as client:
        write_predictions(out, run_inference(samples, cfg, cache, client, stats=stats))
    event("inference finished", path=str(out), **stats.to_dict())
    return stats


def _split_filter(samples, splits):
    return (s for s in samples if not splits or s.split in splits)


def cmd_infer(args) -> int:
    cfg = _endpoint(args)
    samples = _split_filter(read_samples(args.corpus), args.split)
    stats = do_infer(samples, cfg, Path(args.out), args.cache_dir)
    return EXIT_PARTIAL if stats.failures else EXIT_OK


def do_score(pred_path, corpus_paths, out_dir: Path, task=None) -> list[Path]:
    samples = [s for p in corpus_paths for s in read_samples(p)]
    reports = score_corpus(samples, read_predictions(pred_path), task=task)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for r in reports:
        path = out_dir / f"{r.dataset_id}__{r.task}.json"
        r.dump(path)
        written.append(path)
        event("scored", dataset=r.dataset_id, task=r.task, n=r.n_samples, parse_failed=r.n_parse_failed)
    return written


def cmd_score(args) -> int:
    do_score(args.predictions, args.corpus, Path(args.out), args.task)
    return EXIT_OK


def _metric_files(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        out.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    return out


def do_report(metric_paths, out_dir: Path) -> list[Path]:
    reports = [MetricReport.load(p) for p in _metric_files(metric_paths)]
    written = write_report(reports, out_dir)
    if not reports:
        event("no metric files; wrote empty report", logging.WARNING)
    return written


def cmd_report(args) -> int:
    do_report(args.metrics, Path(args.out))
    return EXIT_OK


# --- pipeline --------------------------------------------------------------


def load_run_config(path, args) -> dict:
    try:
        cfg = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("run config must be a mapping")
    base = Path(path).parent
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.chat_format:
        cfg["chat_format"] = args.chat_format
    if args.cache_dir:
        cfg["cache_dir"] = args.cache_dir
    if args.out:
        cfg["output_dir"] = args.out
    for key in ("manifests", "output_dir"):
        if not cfg.get(key):
            raise ConfigError(f"run config is missing '{key}'")
    manifests = cfg["manifests"]
    manifests = [manifests] if isinstance(manifests, str) else list(manifests)
    paths = []
    for m in manifests:
        p = Path(m) if Path(m).is_absolute() else base / m
        paths.extend(find_manifests(p) if p.is_dir() else [p])
    if not paths:
        raise ConfigError("run config names no manifests")
    cfg["manifest_paths"] = paths
    out = Path(cfg["output_dir"])
    cfg["output_dir"] = out if out.is_absolute() else base / out
    cfg["endpoint_config"] = _endpoint(args, cfg.get("endpoint"))
    cfg.setdefault("seed", 0)
    cfg.setdefault("chat_format", "messages")
    cfg.setdefault("eval_splits", ["test"])
    cache = cfg.get("cache_dir") or cfg["output_dir"] / "cache"
    cfg["cache_dir"] = str(cache if Path(cache).is_absolute() else base / cache)
    return cfg


def cmd_pipeline(args) -> int:
    cfg = load_run_config(args.config, args)
    out: Path = cfg["output_dir"]
    marks = out / ".stages"
    marks.mkdir(parents=True, exist_ok=True)
    data_dir = out / "data"
    eval_path = out / "eval_samples.jsonl"
    pred_path = out / "predictions.jsonl"
    partial = False

    def eval_corpus():
        files = sorted(
            p for split in cfg["eval_splits"] for p in data_dir.glob(f"*.{split}.jsonl")
        )
        return [s for f in files for s in read_samples(f)]

    def stage_ingest():
        return {"datasets": do_ingest(cfg["manifest_paths"], data_dir)}

    def stage_build_sft():
        return {"records": do_build_sft(cfg["manifest_paths"], cfg["seed"], out / "sft.jsonl", cfg["chat_format"])}

    def stage_render():
        samples = eval_corpus()
        write_samples(eval_path, samples)
        return {"records": do_render(samples, out / "rendered.jsonl", cfg["chat_format"])}

    def stage_infer():
        nonlocal partial
        stats = do_infer(read_samples(eval_path), cfg["endpoint_config"], pred_path, cfg["cache_dir"])
        if stats.failures:
            partial = True
            return None
        return stats.to_dict()

    def stage_score():
        return {"files": [str(p) for p in do_score(pred_path, [eval_path], out / "metrics")]}

    def stage_report():
        return {"files": [str(p) for p in do_report([out / "metrics"], out / "report")]}

    runners = {
        "ingest": stage_ingest,
        "build_sft": stage_build_sft,
        "render": stage_render,
        "infer": stage_infer,
        "score": stage_score,
        "report": stage_report,
    }
    for i, name in enumerate(STAGES, 1):
        mark = marks / f"{name}.done"
        if mark.exists():
            event("stage skipped", stage=name, reason="already complete")
            continue
        t0 = time.perf_counter()
        try:
            summary = runners[name]()
        except Exception as exc:
            event("stage failed", logging.ERROR, stage=name, error=f"{type(exc).__name__}: {exc}")
            return 10 + i
        event("stage complete", stage=name, seconds=round(time.perf_counter() - t0, 3))
        # downstream of an incomplete stage, outputs are provisional
        if summary is not None and not partial:
            mark.write_text(json.dumps(summary, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_mock_serve(args) -> int:
    samples = [s for p in args.corpus for s in read_samples(p)]
    server = MockChatServer(EchoResponder(samples), port=args.port).start()
    print(server.url, flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed for randomized stages")
    common.add_argument("--log-level", default="info")

    endpoint = argparse.ArgumentParser(add_help=False)
    endpoint.add_argument("--endpoint", help="base URL of an OpenAI-compatible API, e.g. http://host:8000/v1")
    endpoint.add_argument("--model", help="model id sent with each request")
    endpoint.add_argument("--parallelism", type=int, default=None)
    endpoint.add_argument("--cache-dir", default=None)
    endpoint.add_argument("--api-key-env", default=None, help="env var holding the bearer token")
    endpoint.add_argument("--max-rps", type=float, default=None)

    chat = argparse.ArgumentParser(add_help=False)
    chat.add_argument("--chat-format", choices=("messages", "string"), default=None)

    p = argparse.ArgumentParser(prog="medvlkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="convert source datasets to the unified JSONL schema")
    s.add_argument("--manifest", action="append", help="manifest file (repeatable)")
    s.add_argument("--manifests", help="directory of *.yaml manifests")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("build-align", parents=[common, endpoint], help="plan the feature-alignment corpus")
    s.add_argument("--pool", required=True, help="JSONL of {image, caption[, source, language]}")
    s.add_argument("--synthetic-fraction", type=float, default=0.0)
    s.add_argument("--group-size", type=int, default=2)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_align)

    s = sub.add_parser("build-sft", parents=[common, chat], help="build the instruction-tuning corpus")
    s.add_argument("--manifest", action="append")
    s.add_argument("--manifests")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_sft)

    s = sub.add_parser("render", parents=[common, chat], help="render a sample corpus to prompts")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("infer", parents=[common, endpoint], help="run a corpus against an endpoint")
    s.add_argument("--corpus", required=True)
    s.add_argument("--split", action="append", help="only these splits (repeatable)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("score", parents=[common], help="score predictions against ground truth")
    s.add_argument("--predictions", required=True)
    s.add_argument("--corpus", required=True, action="append", help="ground-truth sample corpus (repeatable)")
    s.add_argument("--task", help="only score this task family")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("report", parents=[common], help="render metric files as Markdown/CSV tables")
    s.add_argument("--metrics", nargs="*", default=[], help="metric JSON files or directories")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("pipeline", parents=[common, endpoint, chat], help="run every stage from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None, help="override output_dir")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("mock-serve", parents=[common], help="serve an echo mock endpoint for a corpus")
    s.add_argument("--corpus", required=True, action="append")
    s.add_argument("--port", type=int, default=0)
    s.set_defaults(func=cmd_mock_serve)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    if args.seed is None and args.command != "pipeline":
        args.seed = 0
    if getattr(args, "chat_format", "messages") is None and args.command != "pipeline":
        args.chat_format = "messages"
    try:
        return args.func(args)
    except AuthFailed as exc:
        event("authentication failed", logging.ERROR, error=str(exc))
        return EXIT_FATAL
    except MedVLError as exc:
        event("fatal error", logging.ERROR, error_type=type(exc).__name__, error=str(exc))
        return EXIT_FATAL
    except (OSError, ValueError) as exc:
        event("fatal error", logging.ERROR, error_type=type(exc).__name__, error=str(exc))
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
