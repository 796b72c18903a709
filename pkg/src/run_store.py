#!/usr/bin/env python3
"""
Run store - SQLite persistence of training runs and their validation records
"""
import hashlib
import json
import os
import sqlite3
import threading
import time
import uuid
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

DB_ENV = "SEQ2SEQ_LAB_DB"
DEFAULT_DB_PATH = Path.home() / ".seq2seq_lab" / "runs.db"
RECORD_CSV_HEADER = "iteration,train_loss,val_loss,rouge1,rouge2,bleu2,avg,wall_clock"


def default_db_path() -> Path:
    return Path(os.getenv(DB_ENV, str(DEFAULT_DB_PATH)))


class RunStatus(Enum):
    """Status of a training run"""
    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    INTERRUPTED = "interrupted"


@dataclass
class RunRecord:
    """One validation point"""
    iteration: int
    train_loss: Optional[float]
    val_loss: float
    rouge1: Optional[float] = None
    rouge2: Optional[float] = None
    bleu2: Optional[float] = None
    avg: Optional[float] = None
    wall_clock: float = 0.0

    def csv_row(self) -> str:
        def fmt(value: Optional[float], digits: int) -> str:
            return "" if value is None else f"{value:.{digits}f}"
        return ",".join([
            str(self.iteration), fmt(self.train_loss, 6), fmt(self.val_loss, 6),
            fmt(self.rouge1, 2), fmt(self.rouge2, 2), fmt(self.bleu2, 2), fmt(self.avg, 2),
            fmt(self.wall_clock, 3),
        ])


def write_records_csv(path: Union[str, Path], records: Sequence[RunRecord]):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    lines = [RECORD_CSV_HEADER] + [r.csv_row() for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class Run:
    id: str
    phase: str
    preset: str
    config: Dict[str, Any]
    status: str
    created_at: float
    completed_at: Optional[float] = None
    checkpoint: Optional[str] = None
    best_score: Optional[float] = None
    error: Optional[str] = None


class RunStore:
    """Database for runs and their records"""

    def __init__(self, db_path: Optional[Union[str, Path]] = None):
        db_path = Path(db_path) if db_path else default_db_path()
        db_path.parent.mkdir(parents=True, exist_ok=True)
        self.db_path = db_path
        self.conn = sqlite3.connect(str(db_path), check_same_thread=False)
        self.conn.row_factory = sqlite3.Row
        self.lock = threading.Lock()
        self._init_db()

    def _init_db(self):
        self.conn.executescript("""
            CREATE TABLE IF NOT EXISTS runs (
                id TEXT PRIMARY KEY,
                phase TEXT NOT NULL,
                preset TEXT NOT NULL,
                config TEXT,
                status TEXT DEFAULT 'queued',
                created_at REAL NOT NULL,
                completed_at REAL,
                checkpoint TEXT,
                best_score REAL,
                error TEXT
            );

            CREATE INDEX IF NOT EXISTS idx_runs_status ON runs(status);
            CREATE INDEX IF NOT EXISTS idx_runs_created ON runs(created_at);

            CREATE TABLE IF NOT EXISTS records (
                run_id TEXT NOT NULL,
                iteration INTEGER NOT NULL,
                train_loss REAL,
                val_loss REAL,
                rouge1 REAL,
                rouge2 REAL,
                bleu2 REAL,
                avg REAL,
                wall_clock REAL,
                FOREIGN KEY (run_id) REFERENCES runs(id)
            );

            CREATE INDEX IF NOT EXISTS idx_records_run ON records(run_id, iteration);
        """)
        self.conn.commit()

    def create_run(self, phase: str, preset: str, config: Dict[str, Any]) -> str:
        run_id = hashlib.sha256(
            f"{phase}:{preset}:{time.time()}:{os.getpid()}:{uuid.uuid4()}".encode()
        ).hexdigest()[:16]
        with self.lock:
            self.conn.execute("""
                INSERT INTO runs (id, phase, preset, config, status, created_at)
                VALUES (?, ?, ?, ?, ?, ?)
            """, (run_id, phase, preset, json.dumps(config, default=str),
                  RunStatus.QUEUED.value, time.time()))
            self.conn.commit()
        return run_id

    def update_run(self, run_id: str, status: RunStatus, checkpoint: Optional[str] = None,
                   best_score: Optional[float] = None, error: Optional[str] = None):
        finished = status in (RunStatus.COMPLETED, RunStatus.FAILED, RunStatus.INTERRUPTED)
        with self.lock:
            self.conn.execute("""
                UPDATE runs SET
                    status = ?,
                    completed_at = COALESCE(?, completed_at),
                    checkpoint = COALESCE(?, checkpoint),
                    best_score = COALESCE(?, best_score),
                    error = COALESCE(?, error)
                WHERE id = ?
            """, (status.value, time.time() if finished else None, checkpoint, best_score, error, run_id))
            self.conn.commit()

    def add_record(self, run_id: str, record: RunRecord):
        with self.lock:
            self.conn.execute("""
                INSERT INTO records (run_id, iteration, train_loss, val_loss, rouge1, rouge2,
                                     bleu2, avg, wall_clock)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
            """, (run_id, record.iteration, record.train_loss, record.val_loss, record.rouge1,
                  record.rouge2, record.bleu2, record.avg, record.wall_clock))
            self.conn.commit()

    def get_run(self, run_id: str) -> Optional[Run]:
        with self.lock:
            row = self.conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
        return self._row_to_run(row) if row else None

    def list_runs(self, limit: int = 20, status: Optional[str] = None) -> List[Run]:
        query = "SELECT * FROM runs"
        params: List[Any] = []
        if status:
            query += " WHERE status = ?"
            params.append(status)
        query += " ORDER BY created_at DESC LIMIT ?"
        params.append(limit)
        with self.lock:
            rows = self.conn.execute(query, params).fetchall()
        return [self._row_to_run(row) for row in rows]

    def records(self, run_id: str) -> List[RunRecord]:
        with self.lock:
            rows = self.conn.execute("""
                SELECT * FROM records WHERE run_id = ? ORDER BY iteration ASC, rowid ASC
            """, (run_id,)).fetchall()
        return [RunRecord(
            iteration=row["iteration"], train_loss=row["train_loss"], val_loss=row["val_loss"],
            rouge1=row["rouge1"], rouge2=row["rouge2"], bleu2=row["bleu2"], avg=row["avg"],
            wall_clock=row["wall_clock"],
        ) for row in rows]

    def status_counts(self) -> Dict[str, int]:
        with self.lock:
            rows = self.conn.execute(
                "SELECT status, COUNT(*) AS count FROM runs GROUP BY status").fetchall()
        return {row["status"]: row["count"] for row in rows}

    def close(self):
        self.conn.close()

    @staticmethod
    def _row_to_run(row) -> Run:
        return Run(
            id=row["id"],
            phase=row["phase"],
            preset=row["preset"],
            config=json.loads(row["config"]) if row["config"] else {},
            status=row["status"],
            created_at=row["created_at"],
            completed_at=row["completed_at"],
            checkpoint=row["checkpoint"],
            best_score=row["best_score"],
            error=row["error"],
        )


def run_to_dict(run: Run) -> Dict[str, Any]:
    return asdict(run)
