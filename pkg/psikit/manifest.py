"""Run manifests: one pretty JSON document per stage run, stable key order."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import orjson
from pydantic import ValidationError

from . import __version__
from .errors import InputValidationError
from .logging_utils import log_info
from .models import Phantom, RunManifest
from .tooling import atomic_write_bytes, sha256_file

MANIFEST_SUFFIX = ".manifest.json"


def build_manifest(stage: str, *, preset: Optional[str] = None, phantom: Optional[Phantom] = None,
                   seed: Optional[int] = None, configs: Optional[Dict[str, Any]] = None,
                   settings: Optional[Dict[str, Any]] = None, inputs: Optional[Dict[str, str]] = None,
                   outputs: Optional[Dict[str, str]] = None, extra: Optional[Dict[str, Any]] = None) -> RunManifest:
    return RunManifest(
        stage=stage,
        software_version=__version__,
        preset=preset,
        seed=seed if seed is not None else (phantom.seed if phantom is not None else None),
        phantom=phantom.model_dump(mode="json") if phantom is not None else None,
        configs=configs or {},
        settings=settings or {},
        inputs=inputs or {},
        outputs=outputs or {},
        extra=extra or {},
    )


def manifest_bytes(manifest: RunManifest) -> bytes:
    return orjson.dumps(manifest.model_dump(mode="json"),
                        option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_APPEND_NEWLINE)


def manifest_path(out_dir: Union[str, Path], stage: str) -> Path:
    return Path(out_dir) / f"{stage}{MANIFEST_SUFFIX}"


def write_manifest(out_dir: Union[str, Path], manifest: RunManifest) -> Path:
    path = atomic_write_bytes(manifest_path(out_dir, manifest.stage), manifest_bytes(manifest))
    log_info("manifest_written", path=path.name)
    return path


def read_manifest(path: Union[str, Path]) -> RunManifest:
    try:
        return RunManifest.model_validate(orjson.loads(Path(path).read_bytes()))
    except FileNotFoundError:
        raise InputValidationError(f"manifest not found: {path}") from None
    except (orjson.JSONDecodeError, ValidationError) as exc:
        raise InputValidationError(f"malformed manifest {path}: {exc}") from exc


def verify_manifest(path: Union[str, Path]) -> List[Tuple[str, str]]:
    """Re-hash the outputs listed in a manifest (looked up next to it).

    Returns (file name, status) pairs; status is "ok", "mismatch" or "missing".
    """
    path = Path(path)
    manifest = read_manifest(path)
    report: List[Tuple[str, str]] = []
    for name, digest in sorted(manifest.outputs.items()):
        target = path.parent / name
        if not target.exists():
            report.append((name, "missing"))
        else:
            report.append((name, "ok" if sha256_file(target) == digest else "mismatch"))
    return report
