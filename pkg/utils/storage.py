"""
Run Storage
Isolated output directories for runs started through the API
"""

import json
import logging
import shutil
import time
import uuid
from pathlib import Path
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


class RunStore:
    """
    Manages one output directory per submitted run

    Each run gets a random id and its own directory holding the run outputs
    and a small meta.json describing the request and its status.
    """

    META_FILE = "meta.json"

    def __init__(self, base_dir: str = "api_runs"):
        """
        Initialize the store

        Args:
            base_dir: Directory under which run directories are created
        """
        self.base_dir = Path(base_dir)
        self.base_dir.mkdir(parents=True, exist_ok=True)

    def create_run(self, request: Dict[str, Any]) -> str:
        """
        Create a new run directory

        Args:
            request: Request description stored alongside the outputs

        Returns:
            Unique run id
        """
        run_id = str(uuid.uuid4())
        run_dir = self.get_run_dir(run_id)
        run_dir.mkdir()
        self.write_meta(run_id, {"request": request, "status": "pending"})
        logger.info(f"Created run: {run_id}")
        return run_id

    def get_run_dir(self, run_id: str) -> Path:
        # uuid4 strings only; anything else could escape base_dir
        try:
            uuid.UUID(run_id)
        except ValueError:
            raise KeyError(f"Invalid run id: {run_id}")
        return self.base_dir / run_id

    def exists(self, run_id: str) -> bool:
        try:
            return self.get_run_dir(run_id).is_dir()
        except KeyError:
            return False

    def write_meta(self, run_id: str, meta: Dict[str, Any]):
        path = self.get_run_dir(run_id) / self.META_FILE
        path.write_text(json.dumps(meta, indent=2, sort_keys=True))

    def read_meta(self, run_id: str) -> Dict[str, Any]:
        path = self.get_run_dir(run_id) / self.META_FILE
        if not path.exists():
            raise KeyError(f"Unknown run: {run_id}")
        return json.loads(path.read_text())

    def update_meta(self, run_id: str, **fields: Any) -> Dict[str, Any]:
        meta = self.read_meta(run_id)
        meta.update(fields)
        self.write_meta(run_id, meta)
        return meta

    def read_events(self, run_id: str) -> Optional[List[str]]:
        """
        Event log lines of a finished run

        Returns:
            The lines, or None while the run has not written its log
        """
        path = self.get_run_dir(run_id) / "events.log"
        if not path.exists():
            return None
        return path.read_text().splitlines()

    def cleanup_run(self, run_id: str) -> bool:
        """
        Remove all files of a run

        Returns:
            True if the run existed and was removed
        """
        try:
            run_dir = self.get_run_dir(run_id)
            if run_dir.exists():
                shutil.rmtree(run_dir)
                logger.info(f"Cleaned up run: {run_id}")
                return True
        except Exception as e:
            logger.error(f"Error cleaning up run {run_id}: {str(e)}")
        return False

    def cleanup_old_runs(self, max_age_hours: int = 24) -> int:
        """
        Remove runs older than the given age

        Returns:
            Number of runs removed
        """
        removed = 0
        max_age_seconds = max_age_hours * 3600
        now = time.time()
        for run_dir in self.base_dir.iterdir():
            if not run_dir.is_dir():
                continue
            try:
                if now - run_dir.stat().st_mtime > max_age_seconds and self.cleanup_run(run_dir.name):
                    removed += 1
            except Exception as e:
                logger.error(f"Error checking run {run_dir.name}: {str(e)}")
        return removed
