"""A module for the RunManifest class."""
from contextlib import contextmanager
import logging
from pathlib import Path
import time
from typing import Dict, List, Optional

from kpeaks.__version__ import __version__
from kpeaks.artifacts.fields import save_json
from kpeaks.errors import InvariantViolation, KpeaksError


logger = logging.getLogger(__name__)


class RunManifest:  # pylint: disable=too-many-instance-attributes
    """What one run did and how it went.

    Holds the version, config hash, stage timings, tolerances and
    acceptance checks.
    """

    FILENAME = "run-manifest.json"

    def __init__(self, command: str, out_dir: Path, config=None):
        self.command = command
        self.out_dir = out_dir
        self.config = config
        self.stages: Dict[str, float] = {}
        self.checks: List[Dict] = []
        self.outputs: List[str] = []
        self.failing_stage: Optional[str] = None
        self.error: Optional[Dict] = None
        self._current: Optional[str] = None

    @contextmanager
    def stage(self, name: str):
        """Time a stage; the name stays current if the stage raises."""
        self._current = name
        start = time.perf_counter()
        logger.info("Stage %s initiated", name)
        try:
            yield
        finally:
            self.stages[name] = time.perf_counter() - start
        logger.info("Stage %s completed in %.3f s", name, self.stages[name])
        self._current = None

    def check(self, name: str, passed: bool, value=None, threshold=None) -> bool:
        """Record an acceptance check."""
        self.checks.append(
            dict(name=name, passed=bool(passed), value=value, threshold=threshold)
        )
        if not passed:
            logger.warning(
                "Check %s failed: value %s, threshold %s", name, value, threshold
            )
        return bool(passed)

    def add_output(self, path: Path) -> Path:
        """Record a written artifact."""
        self.outputs.append(str(path))
        return path

    def fail(self, err: KpeaksError) -> None:
        """Record the failing stage and the error."""
        self.failing_stage = self._current or "setup"
        self.error = dict(
            type=type(err).__name__, message=str(err), exit_code=err.exit_code
        )

    def require_checks(self) -> None:
        """Raise InvariantViolation if any recorded check failed."""
        failed = [c["name"] for c in self.checks if not c["passed"]]
        if failed:
            self._current = "checks"
            raise InvariantViolation(f"Acceptance checks failed: {', '.join(failed)}")

    @property
    def status(self) -> str:
        """ok or failed."""
        return "failed" if self.error is not None else "ok"

    def to_dict(self) -> Dict:
        """JSON-ready manifest."""
        config = self.config
        return dict(
            tool="kpeaks",
            version=__version__,
            command=self.command,
            config_hash=None if config is None else config.config_hash(),
            threads=None if config is None else config.threads,
            tolerances=None if config is None else config.tolerances(),
            stages=self.stages,
            checks=self.checks,
            outputs=self.outputs,
            status=self.status,
            failing_stage=self.failing_stage,
            error=self.error,
        )

    def save(self) -> Path:
        """Write run-manifest.json into the output directory."""
        return save_json(self.to_dict(), self.out_dir, self.FILENAME)

    def __repr__(self):
        return (
            f'RunManifest(command="{self.command}", '
            f'out_dir="{self.out_dir}", status="{self.status}")'
        )
