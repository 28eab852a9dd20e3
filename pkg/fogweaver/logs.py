import json
import os
import secrets
from datetime import datetime
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

DEFAULT_LOG_DIR = "logs"


def log_dir(override=None) -> Path:
    load_dotenv()
    path = Path(override or os.environ.get("FOGWEAVER_LOG_DIR") or DEFAULT_LOG_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def serializer(obj):
    if isinstance(obj, datetime):
        return obj.isoformat()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return obj.as_posix()
    return str(obj)


def log_run(result, config_echo: dict, run_dir, repetition: int, directory=None) -> str:
    """
    Saves one executed run to a JSON file in the log directory. Wall clock
    time is only kept here, run artifacts never carry it.
    """
    finished = datetime.now()
    entry = {
        "scenario": result.scenario,
        "repetition": repetition,
        "seed": result.seed,
        "config": config_echo,
        "counters": result.counters(),
        "audits": result.audits,
        "wallClock": result.wall_clock,
        "finishedAt": finished,
        "runDir": Path(run_dir),
    }

    ts_str = finished.strftime("%Y%m%d_%H%M%S")
    rand_hex = secrets.token_hex(3)
    filepath = log_dir(directory) / f"{result.scenario}_{ts_str}_{rand_hex}.json"

    with filepath.open("w", encoding="utf-8") as f_out:
        json.dump(entry, f_out, indent=2, default=serializer)

    return str(filepath)
