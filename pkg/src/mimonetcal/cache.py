"""Append-only JSON-lines store for capacity estimates."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

from .channel import CapacityEstimate

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def cache_key(n: int, snr_db: float, substate_class: int, samples: int, seed: int) -> tuple:
    return (int(n), float(snr_db), int(substate_class), int(samples), int(seed))


class CapacityCache:
    """Capacity estimates keyed by (n, snr_db, class, samples, seed).

    Every record is written with a single ``write`` on an ``O_APPEND``
    descriptor, so concurrent writers never interleave within a line.
    Unparseable lines are skipped with a warning.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._mem: dict[tuple, CapacityEstimate] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self):
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    if rec.get("v") != SCHEMA_VERSION:
                        raise ValueError(f"schema version {rec.get('v')!r}")
                    key = cache_key(rec["n"], rec["snr_db"], rec["class"], rec["samples"], rec["seed"])
                    est = CapacityEstimate(
                        mean=float(rec["mean"]),
                        std_error=float(rec["std_error"]),
                        samples=int(rec["samples"]),
                        snr_db=float(rec["snr_db"]),
                        seed=int(rec["seed"]),
                    )
                except (ValueError, KeyError, TypeError) as exc:
                    log.warning("%s:%d: skipping corrupt cache line (%s)", self.path, lineno, exc)
                    continue
                self._mem[key] = est

    def get(self, key) -> CapacityEstimate | None:
        return self._mem.get(key)

    def put(self, key, est: CapacityEstimate):
        self._mem[key] = est
        if self.path is None:
            return
        n, snr_db, cls, samples, seed = key
        rec = {
            "v": SCHEMA_VERSION,
            "n": n,
            "snr_db": snr_db,
            "class": cls,
            "samples": samples,
            "seed": seed,
            "mean": est.mean,
            "std_error": est.std_error,
        }
        line = (json.dumps(rec, sort_keys=True) + "\n").encode("utf-8")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            os.write(fd, line)
        finally:
            os.close(fd)

    def __len__(self):
        return len(self._mem)


def default_cache_path() -> Path:
    root = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(root) / "mimonetcal" / "capacities.jsonl"
