"""Module for defining dependency injectors for the results API.

These functions are used by FastAPI's dependency injection system to provide
use case instances, wired to the artifact repository selected by the
environment, to the route handlers.
"""

import os
from pathlib import Path

from fedinit.domain.experiment.usecases import (
    GetComparisonUseCase,
    GetRunUseCase,
    ListRunsUseCase,
)
from fedinit.infra.filesystem_repository import FilesystemArtifactRepository
from fedinit.infra.in_memory_repository import InMemoryArtifactRepository
from fedinit.interfaces.artifacts import ArtifactRepository

IN_MEMORY_REPOSITORY = InMemoryArtifactRepository()


def get_artifact_repository() -> ArtifactRepository:
    """Returns the ArtifactRepository selected by environment configuration.

    Uses the shared InMemoryArtifactRepository if REPOSITORY_TYPE is set to
    'in_memory', otherwise a FilesystemArtifactRepository rooted at
    FEDINIT_RUNS_DIR (default "runs").

    Returns:
        An instance of ArtifactRepository.
    """
    if os.getenv("REPOSITORY_TYPE", "filesystem") == "in_memory":
        return IN_MEMORY_REPOSITORY
    return FilesystemArtifactRepository(Path(os.getenv("FEDINIT_RUNS_DIR", "runs")))


def get_list_runs_use_case() -> ListRunsUseCase:
    return ListRunsUseCase(get_artifact_repository())


def get_run_use_case() -> GetRunUseCase:
    return GetRunUseCase(get_artifact_repository())


def get_comparison_use_case() -> GetComparisonUseCase:
    return GetComparisonUseCase(get_artifact_repository())
