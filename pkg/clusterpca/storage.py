"""CSV and JSON ingestion/export for panels, models, covariances and backtests.

Every file written carries a metadata line ``# ClusterPCA <version> | <command line> | seed=<seed>``
(a leading comment in CSV files, a ``meta`` key in JSON documents).
"""

import json
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .constants import APP_NAME, APP_VERSION
from .covariance import CovarianceEstimate
from .engine import CpcaModel
from .errors import ValidationError
from .logging_config import logger
from .matrix import DataMatrix
from .portfolio import BacktestResult

DATE_HEADERS = ("date", "dates", "day", "time", "timestamp")


def metadata_line(cmdline: str = "", seed=None) -> str:
    return f"# {APP_NAME} {APP_VERSION} | {cmdline} | seed={seed}"


def _meta(cmdline: str, seed) -> dict:
    return {"app": APP_NAME, "version": APP_VERSION, "cmdline": cmdline, "seed": seed}


@dataclass(frozen=True, eq=False)
class Panel:
    data: DataMatrix
    dates: list[str] | None = None


def _leading_comments(path: str) -> int:
    count = 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            count += 1
    return count


def _is_date_column(header, cells: pd.Series) -> bool:
    """A date header, or an ISO date in the first data row whatever the header."""
    if str(header).strip().lower() in DATE_HEADERS:
        return True
    if cells.empty:
        return False
    return not pd.isna(pd.to_datetime(cells.iloc[0].strip(), format="%Y-%m-%d", errors="coerce"))


def read_panel_csv(path: str) -> Panel:
    """Read a header-row CSV of numeric columns, with an optional ISO date first column.

    The date column is recognized by its header or by an ISO date in its first row.
    Leading ``#`` lines are skipped. Problems are reported with the file line number.
    """
    try:
        skip = _leading_comments(path)
        frame = pd.read_csv(path, skiprows=skip, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ValidationError(f"{path}: malformed CSV ({e})")
    if frame.shape[1] == 0:
        raise ValidationError(f"{path}: no columns")
    first_line = skip + 2

    dates = None
    first = frame.columns[0]
    if _is_date_column(first, frame[first]):
        parsed = pd.to_datetime(frame[first], format="%Y-%m-%d", errors="coerce")
        bad = np.flatnonzero(parsed.isna().to_numpy())
        if bad.size:
            raise ValidationError(f"{path}, line {first_line + bad[0]}: {frame[first].iloc[bad[0]]!r} is not an ISO date")
        order = np.diff(parsed.to_numpy().astype("datetime64[D]").astype(np.int64))
        out_of_order = np.flatnonzero(order <= 0)
        if out_of_order.size:
            raise ValidationError(f"{path}, line {first_line + out_of_order[0] + 1}: dates are not strictly increasing")
        dates = [d.strftime("%Y-%m-%d") for d in parsed]
        frame = frame.drop(columns=first)

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = np.argwhere(~np.isfinite(numeric.to_numpy(dtype=float)))
    if bad.size:
        row, col = bad[0]
        raise ValidationError(
            f"{path}, line {first_line + row}: column {frame.columns[col]!r} has non-numeric value "
            f"{frame.iat[row, col]!r}"
        )
    logger.debug("Read %s: %d rows x %d columns%s", path, numeric.shape[0], numeric.shape[1],
                 " (dated)" if dates else "")
    return Panel(DataMatrix.from_array(numeric.to_numpy(dtype=float), [str(c) for c in frame.columns]), dates)


def read_labels_csv(path: str, column_ids) -> np.ndarray:
    """Reference labels from a ``column_id,label`` CSV, aligned to ``column_ids``."""
    try:
        frame = pd.read_csv(path, comment="#", dtype=str)
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValidationError(f"{path}: malformed CSV ({e})")
    if not {"column_id", "label"} <= set(frame.columns):
        raise ValidationError(f"{path}: need columns column_id,label")
    mapping = dict(zip(frame["column_id"].str.strip(), frame["label"].str.strip()))
    missing = [c for c in column_ids if c not in mapping]
    if missing:
        raise ValidationError(f"{path}: no label for {', '.join(missing[:5])}")
    _, codes = np.unique([mapping[c] for c in column_ids], return_inverse=True)
    return codes + 1


def _write_csv(path: str, frame: pd.DataFrame, header: str, index: bool = False) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header + "\n")
        frame.to_csv(f, index=index, float_format="%.10g", lineterminator="\n")


def write_panel_csv(path: str, X: DataMatrix, dates=None, header: str = "") -> None:
    frame = pd.DataFrame(X.values, columns=list(X.column_ids))
    if dates is not None:
        frame.insert(0, "date", list(dates))
    _write_csv(path, frame, header or metadata_line())


def write_table_csv(path: str, frame: pd.DataFrame, header: str = "") -> None:
    _write_csv(path, frame, header or metadata_line())


def write_covariance_csv(path: str, est: CovarianceEstimate, header: str = "") -> None:
    ids = list(est.column_ids) or [f"x{m + 1}" for m in range(est.sigma.shape[0])]
    frame = pd.DataFrame(est.sigma, columns=ids)
    frame.insert(0, "column_id", ids)
    _write_csv(path, frame, header or metadata_line())


def write_backtest(csv_path: str, json_path: str, result: BacktestResult, cmdline: str = "", seed=None) -> None:
    """Daily portfolio returns as CSV, metrics as JSON."""
    frame = pd.DataFrame({"date": result.dates, "return": result.returns})
    _write_csv(csv_path, frame, metadata_line(cmdline, seed))
    write_json(json_path, result.metrics_dict(), cmdline, seed)


def write_json(path: str, document: dict, cmdline: str = "", seed=None) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"meta": _meta(cmdline, seed), **document}, f, indent=2)
        f.write("\n")


def save_model(path: str, model: CpcaModel, cmdline: str = "", seed=None) -> None:
    write_json(path, model.to_dict(), cmdline, seed)


def load_model(path: str) -> CpcaModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return CpcaModel.from_dict(data)
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"{path}: not a ClusterPCA model ({e})")
