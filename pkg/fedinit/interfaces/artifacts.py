"""This module defines the interface for run artifact persistence.

Use cases depend only on this contract, so experiments can write to the
filesystem in production and to memory in tests.
"""

import abc

from fedinit.domain.experiment.schema import RunManifest


class ArtifactRepository(abc.ABC):
    """Abstract base class defining the contract for storing run outputs."""

    @abc.abstractmethod
    def write(self, run_id: str, name: str, content: bytes) -> str:
        """Stores one output file of a run, replacing any previous content.

        Args:
            run_id: Identifier of the run the file belongs to.
            name: File name, unique within the run.
            content: Raw bytes to store.

        Returns:
            The location of the stored file, as recorded in the run manifest.
        """
        raise NotImplementedError

    @abc.abstractmethod
    def read(self, run_id: str, name: str) -> bytes | None:
        """Reads one output file of a run.

        Args:
            run_id: Identifier of the run.
            name: File name within the run.

        Returns:
            The stored bytes if found, otherwise None.
        """
        raise NotImplementedError

    @abc.abstractmethod
    def save_manifest(self, manifest: RunManifest) -> str:
        """Stores or replaces the manifest of a run.

        Args:
            manifest: The manifest to store; `manifest.run_id` names the run.

        Returns:
            The location of the stored manifest.
        """
        raise NotImplementedError

    @abc.abstractmethod
    def find_manifest(self, run_id: str) -> RunManifest | None:
        """Finds the manifest of a run.

        Args:
            run_id: Identifier of the run.

        Returns:
            The RunManifest if found, otherwise None.
        """
        raise NotImplementedError

    @abc.abstractmethod
    def list_runs(self) -> list[str]:
        """Lists the identifiers of every run that has a manifest, sorted.

        Returns:
            A list of run identifiers.
        """
        raise NotImplementedError
