"""CSV and JSON codecs for traces, sparse samples, features and reports."""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from kehsim.activity import LABEL_ORDER, ActivityLabel
from kehsim.circuit import VoltageTrace
from kehsim.sampler import FeatureVector, SparseSample

TRACE_COLUMNS = ["t_s", "v_volts", "label"]
SAMPLE_COLUMNS = ["t_s", "v_volts", "label", "segment_in", "segment_out", "discharges"]
FEATURE_COLUMNS = ["t_end_s", "r_rear_vps", "r_front_vps", "label"]


def _write_csv(df: pd.DataFrame, path: Path, float_format: str, **kwargs) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, float_format=float_format, lineterminator="\n", **kwargs)


def _read_csv(path: Path, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    df = pd.read_csv(path, dtype={"label": str})
    if list(df.columns) != list(columns):
        expected, got = ",".join(columns), ",".join(df.columns)
        raise ValueError(f"{path}: expected columns {expected}, got {got}")
    return df


def write_trace_csv(path: Path, trace: VoltageTrace, stride: int = 1) -> None:
    """
    Write a voltage trace as ``t_s,v_volts,label``.

    Args:
        path: Output CSV path
        trace: Dense trace
        stride: Keep every stride-th sample (1 keeps all)
    """
    keep = slice(None, None, stride)
    df = pd.DataFrame(
        {
            "t_s": trace.times[keep],
            "v_volts": trace.samples[keep],
            "label": np.asarray(trace.labels)[keep],
        }
    )
    _write_csv(df, path, "%.6f", index=False)


def read_trace_csv(path: Path) -> VoltageTrace:
    """
    Read a trace written by write_trace_csv.

    The grid step is taken from the first two timestamps; buck discharges are
    not stored, so ``discharges`` is None.
    """
    df = _read_csv(path, TRACE_COLUMNS)
    if len(df) < 2:
        raise ValueError(f"{path}: a trace needs at least two samples")
    t = df["t_s"].to_numpy(dtype=float)
    dt = round(float(t[1] - t[0]), 9)
    if not np.allclose(np.diff(t), dt, atol=2e-6):
        raise ValueError(f"{path}: timestamps are not on a uniform grid")
    return VoltageTrace(
        dt=dt,
        samples=df["v_volts"].to_numpy(dtype=float),
        labels=df["label"].to_numpy(dtype=str),
    )


def write_samples_csv(path: Path, samples: Sequence[SparseSample]) -> None:
    df = pd.DataFrame(
        [
            (s.t, s.v, s.label, s.segment_in, s.segment_out, s.discharges)
            for s in samples
        ],
        columns=SAMPLE_COLUMNS,
    )
    _write_csv(df, path, "%.6f", index=False)


def read_samples_csv(path: Path) -> List[SparseSample]:
    df = _read_csv(path, SAMPLE_COLUMNS)
    return [
        SparseSample(
            t=float(row.t_s),
            v=float(row.v_volts),
            label=str(row.label),
            segment_in=int(row.segment_in),
            segment_out=int(row.segment_out),
            discharges=int(row.discharges),
        )
        for row in df.itertuples(index=False)
    ]


def write_features_csv(path: Path, vectors: Sequence[FeatureVector]) -> None:
    """Write fused feature vectors as ``t_end_s,r_rear_vps,r_front_vps,label``."""
    df = pd.DataFrame(
        [(v.t_end, v.r_rear, v.r_front, v.label.value) for v in vectors],
        columns=FEATURE_COLUMNS,
    )
    _write_csv(df, path, "%.9f", index=False)


def read_features_csv(path: Path) -> List[FeatureVector]:
    df = _read_csv(path, FEATURE_COLUMNS)
    try:
        return [
            FeatureVector(
                r_rear=float(row.r_rear_vps),
                r_front=float(row.r_front_vps),
                label=ActivityLabel(row.label),
                t_end=float(row.t_end_s),
            )
            for row in df.itertuples(index=False)
        ]
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from e


def write_confusion_csv(path: Path, confusion: np.ndarray) -> None:
    """
    Confusion matrix with true labels as rows and predicted labels as columns.

    Whole-number matrices are written as integers, averaged ones with 4 decimals.
    """
    labels = [label.value for label in LABEL_ORDER]
    matrix = np.asarray(confusion)
    if np.allclose(matrix, np.round(matrix)):
        matrix, float_format = np.round(matrix).astype(np.int64), "%d"
    else:
        float_format = "%.4f"
    df = pd.DataFrame(matrix, index=labels, columns=labels)
    _write_csv(df, path, float_format, index_label="true\\pred")


def write_table_csv(path: Path, rows: Sequence[Dict[str, Any]], float_format: str = "%.4f") -> None:
    _write_csv(pd.DataFrame(list(rows)), path, float_format, index=False)


def _jsonable(value: Any) -> Any:
    # JSON has no nan or inf; they are written as null.
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_json(path: Path, data: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_jsonable(data), f, indent=2, sort_keys=True)
        f.write("\n")


def write_text(path: Path, text: str, encoding: Optional[str] = "utf-8") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding=encoding)
