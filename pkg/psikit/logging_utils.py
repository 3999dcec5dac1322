"""Structured logging utilities with human-friendly console output.

Every stage emits one event per step. By default a concise human-readable
line is printed to stderr; set PSIKIT_LOG_JSON=1 to also emit JSON lines.
"""
from __future__ import annotations

import os
import sys
import time
from typing import Any, Dict, Iterable

import orjson

_LEVELS = {"DEBUG": 10, "INFO": 20, "WARN": 30, "ERROR": 40}

HUMAN_MIRROR = True
JSON_ENABLED = os.getenv("PSIKIT_LOG_JSON", "0").strip().lower() in {"1", "true", "yes", "on"}
MIN_LEVEL = _LEVELS.get(os.getenv("PSIKIT_LOG_LEVEL", "INFO").strip().upper().replace("WARNING", "WARN"), 20)


def configure(level: str | None = None, json_enabled: bool | None = None) -> None:
    """Apply level/JSON switches from Settings (CLI startup)."""
    global JSON_ENABLED, MIN_LEVEL
    if level is not None:
        MIN_LEVEL = _LEVELS.get(level.upper().replace("WARNING", "WARN"), 20)
    if json_enabled is not None:
        JSON_ENABLED = bool(json_enabled)


def _base(event: str, level: str) -> Dict[str, Any]:
    return {
        "ts": time.time(),
        "level": level,
        "event": event,
        "pid": os.getpid(),
    }


def _kv(rec: Dict[str, Any], keys: list[str]) -> str:
    parts = []
    for k in keys:
        if k in rec and rec[k] is not None:
            parts.append(f"{k}={rec[k]}")
    return " ".join(parts)


def _pretty(rec: Dict[str, Any]) -> str:
    ev = str(rec.get("event") or "").strip()
    lvl = str(rec.get("level", "INFO")).upper()
    if ev == "simulate_done":
        return f"[SIM] {_kv(rec, ['frames', 'angles', 'elements', 'samples', 'scatterers', 'latency_ms'])}"
    if ev == "scatterers_skipped":
        return f"[SIM] skipped {rec.get('count')} scatterer-events outside depth {rec.get('max_depth_m')} m"
    if ev == "beamform_done":
        return f"[BF] {_kv(rec, ['frames', 'nz', 'nx', 'angles', 'covered', 'latency_ms'])}"
    if ev == "iq_done":
        return f"[IQ] demod {_kv(rec, ['demod_freq', 'decim', 'nz_out', 'latency_ms'])}"
    if ev == "svd_done":
        return f"[IQ] svd {_kv(rec, ['apod', 'lo', 'hi', 'k', 'latency_ms'])}"
    if ev in {"psi_done", "cfi_done"}:
        return f"[PSI] {ev.replace('_done', '')} {_kv(rec, ['pairs', 'sets', 'symmetric', 'latency_ms'])}"
    if ev == "metrics_done":
        return f"[MET] {_kv(rec, ['skeleton', 'skipped', 'coverage_ratio', 'cutoff_reached'])}"
    if ev in {"dataset_written", "dataset_read"}:
        return f"[IO] {ev.split('_')[1]} {rec.get('path')} {_kv(rec, ['kind', 'shape'])}"
    if ev == "manifest_written":
        return f"[IO] manifest {rec.get('path')}"
    if ev == "stage_error":
        return f"[ERR] {rec.get('stage')}: {rec.get('error')} (exit {rec.get('exit_code')})"
    extras = {k: v for k, v in rec.items() if k not in {"ts", "level", "event", "pid"}}
    tail = " ".join(f"{k}={v}" for k, v in extras.items())
    return f"[LOG] {lvl} {ev} {tail}".rstrip()


def _write(rec: Dict[str, Any]) -> None:
    if _LEVELS.get(rec["level"], 20) < MIN_LEVEL:
        return
    if JSON_ENABLED:
        sys.stderr.write(orjson.dumps(rec, option=orjson.OPT_SERIALIZE_NUMPY, default=str).decode() + "\n")
    if HUMAN_MIRROR:
        sys.stderr.write(_pretty(rec) + "\n")
    sys.stderr.flush()


def log_debug(event: str, **kv: Any) -> None:
    rec = _base(event, "DEBUG")
    rec.update(kv)
    _write(rec)


def log_info(event: str, **kv: Any) -> None:
    rec = _base(event, "INFO")
    rec.update(kv)
    _write(rec)


def log_warning(event: str, **kv: Any) -> None:
    rec = _base(event, "WARN")
    rec.update(kv)
    _write(rec)


def log_error(event: str, **kv: Any) -> None:
    rec = _base(event, "ERROR")
    rec.update(kv)
    _write(rec)


def elapsed_ms(t0: float) -> int:
    return int((time.perf_counter() - t0) * 1000)


def print_banner(title: str, lines: Iterable[str]) -> None:
    """Print a simple banner to stderr (run summaries)."""
    lines = list(lines)
    width = max(len(title), *(len(s) for s in lines), 40) + 2
    bar = "=" * width
    sys.stderr.write("\n" + bar + "\n")
    sys.stderr.write(title + "\n")
    sys.stderr.write(bar + "\n")
    for s in lines:
        sys.stderr.write(s + "\n")
    sys.stderr.write(bar + "\n\n")
    sys.stderr.flush()
