import os
import subprocess

import uvicorn


def start() -> None:
    """Starts the Uvicorn server for the results API."""
    os.environ.setdefault("FEDINIT_RUNS_DIR", "runs")
    uvicorn.run("fedinit.app.main:app", host="0.0.0.0", port=8000, reload=True)


def auto_format() -> None:
    """Formats the 'fedinit' and 'tests' directories using Black."""
    subprocess.call(["black", "fedinit", "tests"])


def run_linter() -> None:
    """Runs the Flake8 linter on the 'fedinit' directory."""
    subprocess.call(["flake8", "fedinit"])


def run_tests() -> None:
    """Runs Pytest; pass '-m experiment' to pytest directly for the long experiments."""
    subprocess.call(["pytest"])


def create_dependency_graph() -> None:
    """Generates a dependency graph for the 'fedinit' package using Pydeps.

    The '--cluster' option groups the domain, infra and app layers in the graph.
    """
    subprocess.call(["pydeps", "fedinit", "--cluster"])


def check_types() -> None:
    """Runs MyPy to perform static type checking on the 'fedinit' directory."""
    subprocess.call(["mypy", "fedinit"])
