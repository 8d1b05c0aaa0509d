"""This module provides an in-memory implementation of the ArtifactRepository interface.

It's used by tests and by the results API when `REPOSITORY_TYPE=in_memory`.
Files and manifests live in dictionaries for the lifetime of the instance.
"""

from fedinit.domain.experiment.schema import RunManifest
from fedinit.interfaces.artifacts import ArtifactRepository


class InMemoryArtifactRepository(ArtifactRepository):
    """An in-memory store of run outputs keyed by (run_id, name)."""

    def __init__(self) -> None:
        self._files: dict[tuple[str, str], bytes] = {}
        self._manifests: dict[str, RunManifest] = {}

    def write(self, run_id: str, name: str, content: bytes) -> str:
        """Stores a copy of `content`.

        Args:
            run_id: Identifier of the run the file belongs to.
            name: File name, unique within the run.
            content: Raw bytes to store.

        Returns:
            The location "run_id/name".
        """
        self._files[(run_id, name)] = bytes(content)
        return f"{run_id}/{name}"

    def read(self, run_id: str, name: str) -> bytes | None:
        return self._files.get((run_id, name))

    def save_manifest(self, manifest: RunManifest) -> str:
        """Stores a deep copy so later edits by the caller are not visible here.

        Args:
            manifest: The manifest to store.

        Returns:
            The location "run_id/manifest.json".
        """
        self._manifests[manifest.run_id] = manifest.model_copy(deep=True)
        return f"{manifest.run_id}/manifest.json"

    def find_manifest(self, run_id: str) -> RunManifest | None:
        return self._manifests.get(run_id)

    def list_runs(self) -> list[str]:
        return sorted(self._manifests)
