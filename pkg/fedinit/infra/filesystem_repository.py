"""This module provides a directory-backed implementation of the ArtifactRepository interface.

Each run is a sub-directory of the root holding its output files and a
`manifest.json`.
"""

import logging
from pathlib import Path

from fedinit.domain.experiment.schema import RunManifest
from fedinit.interfaces.artifacts import ArtifactRepository

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _is_plain_name(name: str) -> bool:
    return bool(name) and name not in (".", "..") and Path(name).name == name


class FilesystemArtifactRepository(ArtifactRepository):
    """Stores run outputs under `root/<run_id>/<name>`."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)

    def _path(self, run_id: str, name: str) -> Path:
        if not (_is_plain_name(run_id) and _is_plain_name(name)):
            raise ValueError(f"Invalid artifact path: {run_id}/{name}")
        return self.root / run_id / name

    def write(self, run_id: str, name: str, content: bytes) -> str:
        """Writes the file, creating the run directory when needed.

        Args:
            run_id: Identifier of the run the file belongs to.
            name: File name, unique within the run.
            content: Raw bytes to store.

        Raises:
            ValueError: If `run_id` or `name` is not a plain file name.

        Returns:
            The path of the written file.
        """
        path = self._path(run_id, name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(content)
        logger.info("Wrote %s", path)
        return str(path)

    def read(self, run_id: str, name: str) -> bytes | None:
        """Reads a file of a run.

        Args:
            run_id: Identifier of the run.
            name: File name within the run.

        Returns:
            The file content, or None if it does not exist or the name is not plain.
        """
        try:
            path = self._path(run_id, name)
        except ValueError:
            return None
        return path.read_bytes() if path.is_file() else None

    def save_manifest(self, manifest: RunManifest) -> str:
        return self.write(
            manifest.run_id, MANIFEST_NAME, (manifest.model_dump_json(indent=2) + "\n").encode()
        )

    def find_manifest(self, run_id: str) -> RunManifest | None:
        content = self.read(run_id, MANIFEST_NAME)
        if content is None:
            return None
        return RunManifest.model_validate_json(content)

    def list_runs(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(
            entry.name for entry in self.root.iterdir() if (entry / MANIFEST_NAME).is_file()
        )
