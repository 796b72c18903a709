#!/usr/bin/env python3
"""
Lab logging - stderr log lines plus a capped activity log file
"""
import os
import sys
import threading
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

DEFAULT_LOG_PATH = Path(__file__).parent.parent / "logs" / "lab_activity.log"
LOG_ENV = "SEQ2SEQ_LAB_LOG"
MAX_ENTRIES = 100

EVENTS = ("RUN_STARTED", "VALIDATION", "CHECKPOINT", "RUN_COMPLETED", "RUN_FAILED",
          "SWEEP_POINT", "EVALUATED", "GENERATED")


def default_log_path() -> Path:
    return Path(os.getenv(LOG_ENV, str(DEFAULT_LOG_PATH)))


class ActivityLog:
    """stderr logger and FIFO activity file (last 100 entries)"""

    def __init__(self, path: Optional[Union[str, Path]] = None, quiet: bool = False):
        self.path = Path(path) if path else default_log_path()
        self.quiet = quiet
        self.lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists():
            self.path.write_text("")

    def log(self, message: str, level: str = "info"):
        """Log to stderr"""
        if self.quiet:
            return
        timestamp = datetime.now().isoformat()
        sys.stderr.write(f"[{timestamp}] [{level.upper()}] {message}\n")
        sys.stderr.flush()

    def activity(self, event_type: str, message: str, run_id: Optional[str] = None):
        """Append one entry, dropping the oldest beyond MAX_ENTRIES"""
        timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        entry = f"[{timestamp}] [{event_type}]"
        if run_id:
            entry += f" [ID: {run_id}]"
        entry += f" {message}\n"

        with self.lock:
            try:
                lines = self.path.read_text().splitlines(keepends=True)
            except OSError:
                lines = []
            lines.append(entry)
            self.path.write_text("".join(lines[-MAX_ENTRIES:]))

    def entries(self):
        try:
            return self.path.read_text().splitlines()
        except OSError:
            return []
