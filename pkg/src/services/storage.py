"""
CapMass 1.0 - Run Manifest
SQLite manifest of every command executed in a run directory.
"""
import json
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from peewee import (
    SqliteDatabase,
    Model,
    AutoField,
    CharField,
    TextField,
    IntegerField,
    DateTimeField,
)

from src.utils.constants import MANIFEST_FILE, TOOL_VERSION


class RunEntry(Model):
    """
    One executed command. Rows are only ever appended.
    """
    id = AutoField()
    command = CharField()
    config_hash = CharField(max_length=64)
    tool_version = CharField(default=TOOL_VERSION)
    seed = CharField()  # u64 does not fit a signed SQLite integer
    threads = IntegerField(default=1)
    files = TextField(default="[]")  # JSON list of produced file names
    exit_status = IntegerField(default=0)
    summary = TextField(default="")
    created_at = DateTimeField(default=datetime.now)

    class Meta:
        table_name = "runs"

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization."""
        return {
            "id": self.id,
            "command": self.command,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "seed": int(self.seed),
            "threads": self.threads,
            "files": json.loads(self.files),
            "exit_status": self.exit_status,
            "summary": self.summary,
            "created_at": self.created_at.isoformat() if self.created_at else None,
        }


class RunManifest:
    """
    Append-only manifest stored as manifest.db in a run directory.
    """

    def __init__(self, run_dir: Path):
        self.path = Path(run_dir) / MANIFEST_FILE
        self._db = SqliteDatabase(str(self.path))
        self._init_db()

    def _init_db(self) -> None:
        """Initialize database and create tables if needed."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._db.bind([RunEntry])
        self._db.connect(reuse_if_open=True)
        self._db.create_tables([RunEntry], safe=True)

    def record(
        self,
        command: str,
        config_hash: str,
        seed: int,
        threads: int = 1,
        files: Optional[List[str]] = None,
        exit_status: int = 0,
        summary: str = "",
    ) -> RunEntry:
        """Append one run."""
        with self._db.bind_ctx([RunEntry]):
            return RunEntry.create(
                command=command,
                config_hash=config_hash,
                tool_version=TOOL_VERSION,
                seed=str(seed),
                threads=threads,
                files=json.dumps(sorted(files or [])),
                exit_status=exit_status,
                summary=summary,
                created_at=datetime.now(),
            )

    def get_all(self) -> List[RunEntry]:
        """All runs, oldest first."""
        with self._db.bind_ctx([RunEntry]):
            return list(RunEntry.select().order_by(RunEntry.id))

    def get_by_id(self, run_id: int) -> Optional[RunEntry]:
        with self._db.bind_ctx([RunEntry]):
            try:
                return RunEntry.get_by_id(run_id)
            except RunEntry.DoesNotExist:
                return None

    def count(self) -> int:
        with self._db.bind_ctx([RunEntry]):
            return RunEntry.select().count()

    def close(self) -> None:
        if not self._db.is_closed():
            self._db.close()
