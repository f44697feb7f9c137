import csv
import io
import json
import tempfile
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ..core.exceptions import LabError
from ..core.utils import to_jsonable
from .settings import settings

SCHEMA_VERSION = 1
COMPLETE_MARKER = "# complete"


class ArtifactStorage:
    """Атомарная запись результатов: каждый файл несёт конфигурацию и зерно
    и заканчивается маркером завершённости."""

    def __init__(self, out_dir: Optional[str] = None, config: Optional[Dict[str, Any]] = None, seed: int = 0):
        self.out_dir = settings.get_results_dir_path(out_dir)
        self.config = to_jsonable(config or {})
        self.seed = seed
        self.artifacts: List[str] = []
        self._lock = threading.RLock()

    def _write_atomic(self, path: Path, text: str) -> None:
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            temp_fd, temp_path = tempfile.mkstemp(suffix=path.suffix + '.tmp', dir=path.parent)
            try:
                with open(temp_fd, 'w', encoding='utf-8', newline='') as f:
                    f.write(text)
                Path(temp_path).replace(path)
            except Exception:
                if Path(temp_path).exists():
                    Path(temp_path).unlink()
                raise
            if path.name not in self.artifacts:
                self.artifacts.append(path.name)

    def write_json(self, name: str, result: Any) -> Path:
        path = self.out_dir / name
        payload = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "seed": self.seed,
            "result": to_jsonable(result),
            "complete": True,
        }
        self._write_atomic(path, json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n")
        return path

    def write_csv(self, name: str, columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> Path:
        path = self.out_dir / name
        buffer = io.StringIO()
        buffer.write(f"# config: {json.dumps({'config': self.config, 'seed': self.seed}, sort_keys=True)}\n")
        writer = csv.DictWriter(buffer, fieldnames=list(columns), extrasaction='ignore', lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({key: self._cell(value) for key, value in row.items()})
        buffer.write(COMPLETE_MARKER + "\n")
        self._write_atomic(path, buffer.getvalue())
        return path

    @staticmethod
    def _cell(value: Any) -> Any:
        value = to_jsonable(value)
        if isinstance(value, float):
            return repr(value)
        if isinstance(value, (list, dict)):
            return json.dumps(value)
        return value

    def write_manifest(self, command: str) -> Path:
        """Пишется последним: список артефактов команды."""
        listed = list(self.artifacts)
        return self.write_json("MANIFEST.json", {"command": command, "artifacts": listed})


def read_csv(path: Path) -> List[Dict[str, str]]:
    """Читает CSV артефакта, проверяя маркер завершённости."""
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()
    if not lines or lines[-1] != COMPLETE_MARKER:
        raise LabError(f"{path}: нет маркера завершённости")
    return list(csv.DictReader(lines[1:-1]))
