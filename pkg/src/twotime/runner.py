"""Scenario execution: replica chunks, worker pool, checkpoints and result files.

Replicas ``0 .. replicas-1`` are split into fixed chunks of ``batch`` ids.
Every chunk result is a JSON document, so a checkpoint is just the config
plus the finished chunks, and aggregation always folds the same
JSON-normalised data in chunk order regardless of how the chunks ran.
"""
from __future__ import annotations

import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, config_from_dict
from .engine import RunawayError
from .oracles import export_csv
from .scenarios import CATALOG, CHECK_COLUMNS, Aggregate, Check

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
CHECKPOINT_NAME = "checkpoint.json"


@dataclass
class ResultBundle:
    """Everything one scenario run produced."""

    config: RunConfig
    aggregate: Aggregate
    context: dict = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    exploratory: bool = False

    @property
    def checks(self) -> list[Check]:
        return self.aggregate.checks

    @property
    def flagged(self) -> bool:
        """A non-exploratory run that made no oracle comparison."""
        return not self.exploratory and not self.checks

    @property
    def passed(self) -> bool | None:
        if self.exploratory:
            return None
        verdicts = [c.passed for c in self.checks]
        return bool(verdicts) and all(v is True for v in verdicts)

    def verdict_lines(self) -> list[str]:
        out = []
        for c in self.checks:
            p = c.passed
            tag = "EXPLORATORY" if p is None else ("PASS" if p else "FAIL")
            out.append(f"{tag:11s} {c.quantity}: measured {c.measured:.6g} +- {c.error:.3g}, "
                       f"expected {c.expected:.6g} ({c.kind}, {c.delta_sigma:+.2f} sigma)")
        return out


def replica_chunks(replicas: int, batch: int) -> list[list[int]]:
    return [list(range(i, min(i + batch, replicas))) for i in range(0, replicas, batch)]


def _normalise(doc):
    return json.loads(json.dumps(doc))


def _execute_chunk(cfg: RunConfig, ids: list[int], ctx: dict) -> tuple[dict | None, list[dict]]:
    """Run one chunk; on a runaway, retry its replicas one by one and drop the failures."""
    scen = CATALOG[cfg.scenario]
    try:
        return _normalise(scen.run_chunk(cfg, ids, ctx)), []
    except RunawayError as exc:
        log.warning("chunk %s hit a runaway (%s); retrying replica by replica", ids, exc)
    parts, failures = [], []
    for r in ids:
        try:
            parts.append(_normalise(scen.run_chunk(cfg, [r], ctx)))
        except RunawayError as exc:
            failures.append({"replica": r, "step": exc.step, "drift_norm": exc.norm})
    return (_merge_parts(parts) if parts else None), failures


def _merge_parts(parts: list[dict]) -> dict:
    """Merge single-replica results: lists concatenate, nested dicts merge, scalars keep the max."""
    def merge(items):
        first = items[0]
        if isinstance(first, list):
            return [x for it in items for x in it]
        if isinstance(first, dict):
            return {k: merge([it[k] for it in items if k in it]) for k in first}
        if isinstance(first, (int, float)):
            return max(items)
        return first
    return merge(parts)


def _write_json(path: Path, doc, clean: bool = True):
    # checkpoints keep NaN/inf so resumed aggregation sees the same numbers
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(_clean(doc) if clean else doc, sort_keys=True, indent=1) + "\n")
    os.replace(tmp, path)


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _checkpoint_doc(cfg, ctx, done, failures):
    return {"version": CHECKPOINT_VERSION, "config": cfg.to_dict(), "config_hash": cfg.hash,
            "context": ctx, "chunks": {str(k): v for k, v in sorted(done.items())}, "failures": failures}


def run_scenario(cfg: RunConfig, *, checkpoint: str | Path | None = None, resume: dict | None = None,
                 progress=None) -> ResultBundle:
    """Run every chunk of ``cfg`` and aggregate.

    ``checkpoint`` is a path rewritten after each finished chunk.  ``resume``
    is a loaded checkpoint document whose finished chunks are reused.
    Runaways drop the affected replicas (recorded in ``failures``).
    """
    scen = CATALOG[cfg.scenario]
    chunks = replica_chunks(cfg.replicas, cfg.batch)
    done: dict[int, dict] = {}
    failures: list[dict] = []
    if resume is not None:
        if resume.get("config_hash") != cfg.hash:
            raise ValueError("checkpoint belongs to a different configuration")
        ctx = resume["context"]
        done = {int(k): v for k, v in resume["chunks"].items()}
        failures = list(resume.get("failures", []))
    else:
        ctx = _normalise(scen.prepare(cfg)) if scen.prepare else {}
    todo = [i for i in range(len(chunks)) if i not in done]
    ckpt = Path(checkpoint) if checkpoint else None

    def finish(i, res):
        result, fails = res
        failures.extend(fails)
        done[i] = result
        if ckpt is not None:
            _write_json(ckpt, _checkpoint_doc(cfg, ctx, done, failures), clean=False)
        if progress:
            progress(f"chunk {i + 1}/{len(chunks)} done ({len(chunks[i])} replicas)")

    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(todo))) as pool:
            futs = {i: pool.submit(_execute_chunk, cfg, chunks[i], ctx) for i in todo}
            for i in todo:
                finish(i, futs[i].result())
    else:
        for i in todo:
            finish(i, _execute_chunk(cfg, chunks[i], ctx))
    results = [done[i] for i in sorted(done) if done[i] is not None]
    if not results:
        raise RuntimeError("every replica failed; nothing to aggregate")
    failures.sort(key=lambda f: f["replica"])
    agg = scen.aggregate(cfg, results, ctx)
    return ResultBundle(cfg, agg, ctx, failures, scen.is_exploratory(cfg))


def load_checkpoint(path) -> tuple[RunConfig, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    cfg = config_from_dict(doc["config"])
    return cfg, doc


def resume_scenario(path, *, workers: int | None = None, progress=None) -> ResultBundle:
    cfg, doc = load_checkpoint(path)
    if workers is not None:
        cfg.workers = workers
    return run_scenario(cfg, checkpoint=path, resume=doc, progress=progress)


def versions() -> dict:
    return {"twotime": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def emit_results(bundle: ResultBundle, out_dir: str | Path | None = None,
                 formats=None) -> list[Path]:
    """Write CSV tables and the JSON manifest; returns the written paths.

    Floats are written with ``repr`` so identical inputs give identical
    bytes; only ``created`` in the manifest varies between runs.
    """
    cfg = bundle.config
    scen = CATALOG[cfg.scenario]
    out = Path(out_dir or cfg.output_dir)
    formats = tuple(formats or cfg.formats)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    written = []
    agg = bundle.aggregate
    if "csv" in formats:
        for name, (cols, rows) in sorted(agg.tables.items()):
            export_csv(out / name, cols, rows)
            written.append(out / name)
        export_csv(out / "oracle_delta.csv", CHECK_COLUMNS, [c.row() for c in agg.checks])
        written.append(out / "oracle_delta.csv")
    if "transcripts" in formats and agg.replicas is not None:
        export_csv(out / "replicas.csv", *agg.replicas)
        written.append(out / "replicas.csv")
    if "json" in formats:
        for name, doc in sorted(agg.json_files.items()):
            _write_json(out / name, doc)
            written.append(out / name)
    manifest = {
        "scenario": cfg.scenario,
        "description": scen.description,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "versions": versions(),
        "oracle": "none (exploratory)" if bundle.exploratory else scen.oracle,
        "tolerance": scen.tolerance,
        "statistic": scen.statistic,
        "exploratory": bundle.exploratory,
        "flagged_no_comparison": bundle.flagged,
        "passed": bundle.passed,
        "verdicts": [c.to_dict() for c in agg.checks],
        "summary": agg.summary,
        "context": bundle.context,
        "failures": bundle.failures,
        "files": sorted(p.name for p in written) + ["manifest.json"],
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    _write_json(out / "manifest.json", manifest)
    written.append(out / "manifest.json")
    return written
