"""Small shared utilities.

- run_parallel(): ordered thread-pool map over fixed work items
- sha256_bytes() / sha256_file(): content hashes for manifests
- atomic_write_bytes(): write to a temp file in the target dir, then rename
"""
from __future__ import annotations

import hashlib
import secrets
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

__all__ = [
    "run_parallel",
    "sha256_bytes",
    "sha256_file",
    "atomic_write_bytes",
]


def run_parallel(fn: Callable[[T], R], items: Sequence[T] | Iterable[T], workers: int = 1) -> List[R]:
    """Apply fn to every item; results come back in item order.

    Work items must write disjoint outputs. The partition is fixed by the
    caller, so the result does not depend on `workers`.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        while True:
            chunk = fh.read(1024 * 1024)
            if not chunk:
                break
            h.update(chunk)
    return h.hexdigest()


def atomic_write_bytes(path: str | Path, payload: bytes) -> Path:
    final_path = Path(path).resolve()
    final_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = final_path.parent / f".tmp-{secrets.token_hex(8)}{final_path.suffix}"
    try:
        with tmp.open("wb") as out:
            out.write(payload)
        tmp.replace(final_path)
    except Exception:
        tmp.unlink(missing_ok=True)
        raise
    return final_path
