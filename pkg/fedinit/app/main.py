"""Read-only results API.

This module initializes the FastAPI application that serves the manifests
and comparison tables of stored runs.
"""

from fastapi import APIRouter, Depends, FastAPI, HTTPException, status

from fedinit import __version__
from fedinit.app.dependencies.runs import (
    get_comparison_use_case,
    get_list_runs_use_case,
    get_run_use_case,
)
from fedinit.domain.experiment.schema import (
    ComparisonResponse,
    RunListResponse,
    RunManifest,
)
from fedinit.domain.experiment.usecases import (
    GetComparisonUseCase,
    GetRunUseCase,
    ListRunsUseCase,
)

app = FastAPI(title="fedinit", version=__version__)

run_router = APIRouter(prefix="/runs", tags=["run"])


@run_router.get("/", response_model=RunListResponse)
async def get_runs(
    use_case: ListRunsUseCase = Depends(get_list_runs_use_case),
) -> RunListResponse:
    """Lists stored runs.

    Args:
        use_case: The dependency-injected use case for listing runs.

    Returns:
        The identifiers of every run with a manifest.
    """
    return use_case.execute()


@run_router.get("/{run_id}", response_model=RunManifest)
async def get_run(
    run_id: str,
    use_case: GetRunUseCase = Depends(get_run_use_case),
) -> RunManifest:
    """Retrieves the manifest of a run.

    Args:
        run_id: Identifier of the run.
        use_case: The dependency-injected use case for fetching a manifest.

    Raises:
        HTTPException: 404 Not Found if the run does not exist.

    Returns:
        The run's manifest.
    """
    try:
        return use_case.execute(run_id)
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(e)) from e


@run_router.get("/{run_id}/comparison", response_model=ComparisonResponse)
async def get_comparison(
    run_id: str,
    use_case: GetComparisonUseCase = Depends(get_comparison_use_case),
) -> ComparisonResponse:
    """Retrieves the comparison table of a compare run.

    Args:
        run_id: Identifier of the run.
        use_case: The dependency-injected use case for reading comparison tables.

    Raises:
        HTTPException: 404 Not Found if the run has no comparison table.

    Returns:
        One row per compared method.
    """
    try:
        return use_case.execute(run_id)
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(e)) from e


@app.get("/")
async def root() -> dict:
    """Root endpoint for the API.

    Returns:
        The service name and version.
    """
    return {"service": "fedinit", "version": __version__}


app.include_router(run_router)
