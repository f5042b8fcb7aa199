"""Append-only trial store: one directory per trial, rebuildable index.

Records are content-addressed by the hash of (dataset fingerprint, train
config), which makes re-runs no-ops and sweeps resumable.  Writes go to a
temp directory that is atomically renamed into place; the index file is a
derived summary that can be rebuilt from the trial directories at any time.
"""

from __future__ import annotations

import json
import os
import shutil
import time
from pathlib import Path

from .training import TrainConfig, TrialRecord, canonical_json, dataset_fingerprint, train, trial_id


class StoreError(Exception):
    pass


class _Lock:
    """Minimal exclusive lockfile (O_CREAT|O_EXCL with timeout)."""

    def __init__(self, path, timeout: float = 30.0):
        self.path = str(path)
        self.timeout = timeout

    def __enter__(self):
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.close(fd)
                return self
            except FileExistsError:
                if time.monotonic() > deadline:
                    raise StoreError(f"could not acquire lock {self.path}")
                time.sleep(0.05)

    def __exit__(self, *exc):
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass


class TrialStore:
    def __init__(self, root):
        self.root = Path(root)
        (self.root / "trials").mkdir(parents=True, exist_ok=True)

    def trial_dir(self, tid: str) -> Path:
        return self.root / "trials" / tid

    def has(self, tid: str) -> bool:
        return (self.trial_dir(tid) / "record.json").exists()

    def save(self, record: TrialRecord) -> None:
        """Persist one record; immutable once written (duplicate saves no-op)."""
        final = self.trial_dir(record.trial_id)
        if (final / "record.json").exists():
            return
        tmp = self.root / "trials" / f".tmp-{record.trial_id}-{os.getpid()}"
        try:
            tmp.mkdir(parents=True)
            d = record.to_dict()
            epochs = d.pop("epoch_metrics")
            with open(tmp / "record.json", "w") as fh:
                fh.write(canonical_json(d))
            with open(tmp / "metrics.jsonl", "w") as fh:
                for line in epochs:
                    fh.write(canonical_json(line) + "\n")
            os.replace(tmp, final)
        except FileExistsError:
            shutil.rmtree(tmp, ignore_errors=True)
        except Exception:
            shutil.rmtree(tmp, ignore_errors=True)
            raise

    def load(self, tid: str) -> TrialRecord:
        tdir = self.trial_dir(tid)
        if not (tdir / "record.json").exists():
            raise StoreError(f"trial {tid} not in store")
        with open(tdir / "record.json") as fh:
            d = json.load(fh)
        with open(tdir / "metrics.jsonl") as fh:
            d["epoch_metrics"] = [json.loads(ln) for ln in fh if ln.strip()]
        return TrialRecord.from_dict(d)

    def list_ids(self) -> list:
        return sorted(
            p.name for p in (self.root / "trials").iterdir()
            if p.is_dir() and not p.name.startswith(".")
        )

    def load_all(self) -> list:
        return [self.load(tid) for tid in self.list_ids()]

    def get_or_run(self, dataset, cfg: TrainConfig, dataset_ref: str = "") -> TrialRecord:
        """Return the cached record for this exact (dataset, config), else train."""
        tid = trial_id(dataset_fingerprint(dataset), cfg)
        if self.has(tid):
            return self.load(tid)
        record = train(dataset, cfg, dataset_ref=dataset_ref)
        self.save(record)
        return record

    def rebuild_index(self) -> Path:
        """Scan trial dirs into a one-line-per-trial summary file."""
        index_path = self.root / "index.jsonl"
        with _Lock(self.root / ".index.lock"):
            rows = []
            for tid in self.list_ids():
                rec = self.load(tid)
                cfg = rec.config
                row = {
                    "trial_id": tid,
                    "dataset_ref": rec.dataset_ref,
                    "dataset_fp": rec.dataset_fp,
                    "method": cfg["method"]["tag"],
                    "lr": cfg["lr"],
                    "weight_decay": cfg["weight_decay"],
                    "seed": cfg["seed"],
                    "explicit_factors": cfg["explicit_factors"],
                    "status": rec.status,
                }
                if "best_test" in rec.reports:
                    row["test_unbiased"] = rec.reports["best_test"].acc_by_alpha.get(0.0)
                rows.append(row)
            tmp = self.root / ".index.tmp"
            with open(tmp, "w") as fh:
                for row in rows:
                    fh.write(canonical_json(row) + "\n")
            os.replace(tmp, index_path)
        return index_path
