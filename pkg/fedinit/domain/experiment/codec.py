"""Byte and text encodings of run artifacts.

Model binary layout (all little-endian):

    8 bytes   magic "FLPM0001"
    u32       number of weight layers L
    u32 x L+1 layer widths (input, hidden..., classes)
    f64 x P   flattened parameters, P = parameter_count(spec)

Reports use percentage points with two decimals; variances are in squared
percentage points.
"""

import csv
import io

import numpy as np

from fedinit.domain.coprefl.entities import MetaLossReport
from fedinit.domain.downstream.entities import SuiteReport, TaskMetrics
from fedinit.domain.errors import InvalidInputError
from fedinit.domain.experiment.schema import (
    ComparisonRow,
    SuiteSummary,
    TaskSummary,
)
from fedinit.domain.model.entities import ModelSpec, ParameterVector
from fedinit.domain.model.network import parameter_count

MODEL_MAGIC = b"FLPM0001"
_U32 = np.dtype("<u4")
_F64 = np.dtype("<f8")

HISTORY_HEADER = ["round", "total", "mean", "variance", "combined"]
SUITE_HEADER = ["task_id", "mean_acc", "variance", "worst10", "worst20", "worst30"]
HISTOGRAM_HEADER = ["bin_low", "bin_high", "count"]
COMPARISON_HEADER = ["method", "acc", "variance", "worst10", "worst20", "worst30"]


def encode_model(spec: ModelSpec, params: ParameterVector) -> bytes:
    """Serializes a model to the binary layout above.

    Raises:
        InvalidInputError: If `params` does not fit `spec`.
    """
    if params.shape != (parameter_count(spec),):
        raise InvalidInputError("Parameters do not match the model spec")
    dims = np.asarray(spec.layer_dims, dtype=_U32)
    header = np.asarray([dims.size - 1], dtype=_U32).tobytes() + dims.tobytes()
    return MODEL_MAGIC + header + params.astype(_F64).tobytes()


def decode_model(blob: bytes) -> tuple[ModelSpec, ParameterVector]:
    """Parses a model binary back into its spec and parameters.

    Raises:
        InvalidInputError: On a wrong magic, truncated header or wrong payload size.
    """
    if blob[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise InvalidInputError("Not a model file: bad magic")
    offset = len(MODEL_MAGIC)
    if len(blob) < offset + _U32.itemsize:
        raise InvalidInputError("Truncated model header")
    n_layers = int(np.frombuffer(blob, dtype=_U32, count=1, offset=offset)[0])
    offset += _U32.itemsize
    if n_layers < 1 or len(blob) < offset + (n_layers + 1) * _U32.itemsize:
        raise InvalidInputError("Truncated model header")
    dims = [int(d) for d in np.frombuffer(blob, dtype=_U32, count=n_layers + 1, offset=offset)]
    offset += (n_layers + 1) * _U32.itemsize
    spec = ModelSpec(input_dim=dims[0], n_classes=dims[-1], hidden_dims=tuple(dims[1:-1]))
    expected = parameter_count(spec)
    if len(blob) - offset != expected * _F64.itemsize:
        raise InvalidInputError(
            f"Model payload holds {(len(blob) - offset) // _F64.itemsize} weights, spec needs {expected}"
        )
    params = np.frombuffer(blob, dtype=_F64, count=expected, offset=offset).astype(np.float64)
    return spec, params


def _pp(fraction: float) -> float:
    return round(100.0 * fraction, 2)


def _pp2(variance: float) -> float:
    return round(1e4 * variance, 2)


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _csv(header: list[str], rows: list[list[object]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def summarize_task(classes: tuple[int, ...], metrics: TaskMetrics) -> TaskSummary:
    return TaskSummary(
        classes=list(classes),
        acc=_pp(metrics.mean_acc),
        variance=_pp2(metrics.acc_variance),
        worst10=_pp(metrics.worst_k[10]),
        worst20=_pp(metrics.worst_k[20]),
        worst30=_pp(metrics.worst_k[30]),
        per_client_acc=[_pp(a) for a in metrics.per_client_acc],
    )


def summarize_suite(report: SuiteReport) -> SuiteSummary:
    """Suite report converted to percentage points."""
    return SuiteSummary(
        acc=_pp(report.mean_acc),
        variance=_pp2(report.acc_variance),
        worst10=_pp(report.worst_k[10]),
        worst20=_pp(report.worst_k[20]),
        worst30=_pp(report.worst_k[30]),
        tasks=[
            summarize_task(classes, metrics)
            for classes, metrics in zip(report.task_classes, report.per_task, strict=True)
        ],
        histogram_edges=list(report.histogram_edges),
        histogram_counts=list(report.histogram_counts),
    )


def suite_json(report: SuiteReport) -> str:
    return summarize_suite(report).model_dump_json(indent=2) + "\n"


def suite_csv(report: SuiteReport) -> str:
    """One row per task; the class subsets live in the JSON summary and the manifest."""
    summary = summarize_suite(report)
    rows: list[list[object]] = [
        [
            index,
            _fmt(task.acc),
            _fmt(task.variance),
            _fmt(task.worst10),
            _fmt(task.worst20),
            _fmt(task.worst30),
        ]
        for index, task in enumerate(summary.tasks)
    ]
    return _csv(SUITE_HEADER, rows)


def histogram_csv(report: SuiteReport) -> str:
    """Pooled per-client accuracy histogram over [0, 1]."""
    edges = report.histogram_edges
    rows: list[list[object]] = [
        [f"{edges[i]:.4f}", f"{edges[i + 1]:.4f}", count]
        for i, count in enumerate(report.histogram_counts)
    ]
    return _csv(HISTOGRAM_HEADER, rows)


def history_csv(history: list[MetaLossReport]) -> str:
    rows: list[list[object]] = [
        [index, repr(r.total), repr(r.mean), repr(r.variance), repr(r.combined)]
        for index, r in enumerate(history)
    ]
    return _csv(HISTORY_HEADER, rows)


def comparison_row(method: str, report: SuiteReport) -> ComparisonRow:
    summary = summarize_suite(report)
    return ComparisonRow(
        method=method,
        acc=summary.acc,
        variance=summary.variance,
        worst10=summary.worst10,
        worst20=summary.worst20,
        worst30=summary.worst30,
    )


def comparison_csv(rows: list[ComparisonRow]) -> str:
    return _csv(
        COMPARISON_HEADER,
        [
            [r.method, _fmt(r.acc), _fmt(r.variance), _fmt(r.worst10), _fmt(r.worst20), _fmt(r.worst30)]
            for r in rows
        ],
    )


def parse_comparison_csv(text: str) -> list[ComparisonRow]:
    """Reads a table written by `comparison_csv`.

    Raises:
        InvalidInputError: If the header is not a comparison header.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != COMPARISON_HEADER:
        raise InvalidInputError(f"Unexpected comparison header: {reader.fieldnames}")
    return [ComparisonRow.model_validate(row) for row in reader]


def gamma_sweep_csv(rows: list[tuple[float, SuiteReport]]) -> str:
    """One row per balancer value: gamma, accuracy and variance."""
    table: list[list[object]] = []
    for gamma, report in rows:
        summary = summarize_suite(report)
        table.append([repr(float(gamma)), _fmt(summary.acc), _fmt(summary.variance)])
    return _csv(["gamma", "acc", "variance"], table)
