#!/usr/bin/env python3

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Optional


def setup_logging(prefix: str = "langevin", log_dir: Optional[str] = None,
                  level: int = logging.INFO) -> str:
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    directory = Path(log_dir) if log_dir else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    log_file = str(directory / f"{prefix}_{timestamp}.log")

    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(message)s",
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(log_file),
        ],
        force=True,
    )
    return log_file


def write_results_file(filename, results: Any) -> bool:
    try:
        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        with open(filename, "w") as f:
            json.dump(results, f, indent=2, sort_keys=True, default=str)
        logging.info(f"Wrote results to {filename}")
        return True
    except Exception as e:
        logging.error(f"Error writing results file: {e}")
        return False
