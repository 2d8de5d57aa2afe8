#!/usr/bin/env python3

import json
import logging
from datetime import datetime, timezone
from pathlib import Path

from models import SeedResult


class RunLogger:
    def __init__(self, log_dir: str = ".", filename: str = "run_log.jsonl"):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.log_file = self.log_dir / filename
        self.records: list[dict] = []

    def log_seed(self, result: SeedResult, experiment: str) -> None:
        final = result.final
        record = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "experiment": experiment,
            "variant": result.variant,
            "seed": result.seed,
            "depth": result.depth,
            "status": "success" if result.success else "failed",
            "error": result.error,
            "wall_seconds": round(result.wall_seconds, 3),
            "final": final.to_dict() if final is not None else None,
        }
        self.records.append(record)
        self._append_record(record)

    def log_check(self, experiment: str, name: str, value: float, threshold: float, passed: bool) -> None:
        record = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "experiment": experiment,
            "check": name,
            "value": value,
            "threshold": threshold,
            "status": "success" if passed else "failed",
        }
        self.records.append(record)
        self._append_record(record)

    def _append_record(self, record: dict) -> None:
        try:
            with open(self.log_file, "a") as f:
                f.write(json.dumps(record, default=str) + "\n")
        except Exception as e:
            logging.error(f"Failed to write run log: {e}")

    def get_summary(self) -> str:
        success = sum(1 for r in self.records if r.get("status") == "success")
        failed = sum(1 for r in self.records if r.get("status") == "failed")
        return (
            f"Run log: {self.log_file}\n"
            f"  Records: {len(self.records)}\n"
            f"  Success: {success} | Failed: {failed}"
        )
