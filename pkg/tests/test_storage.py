import json

import numpy as np
import pandas as pd
import pytest

from clusterpca.config import FitConfig
from clusterpca.covariance import CovarianceEstimate
from clusterpca.engine import fit
from clusterpca.errors import ValidationError
from clusterpca.matrix import DataMatrix
from clusterpca.portfolio import rolling_backtest
from clusterpca.storage import (
    load_model,
    metadata_line,
    read_labels_csv,
    read_panel_csv,
    save_model,
    write_backtest,
    write_covariance_csv,
    write_json,
    write_panel_csv,
)


def _write(path, text: str) -> str:
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_read_dated_panel_with_comment_lines(tmp_path) -> None:
    path = _write(tmp_path / "p.csv", "# exported\ndate,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5,6\n")
    panel = read_panel_csv(path)
    assert panel.dates == ["2020-01-01", "2020-01-02", "2020-01-03"]
    assert panel.data.column_ids == ("a", "b")
    assert np.array_equal(panel.data.values, [[1, 2], [3, 4], [5, 6]])


def test_read_undated_panel(tmp_path) -> None:
    panel = read_panel_csv(_write(tmp_path / "p.csv", "x,y,z\n1,2,3\n4,5,6.5\n"))
    assert panel.dates is None
    assert panel.data.values[1, 2] == 6.5


def test_non_numeric_cell_reports_line_and_column(tmp_path) -> None:
    path = _write(tmp_path / "p.csv", "# c\ndate,a,b\n2020-01-01,1,2\n2020-01-02,3,x\n")
    with pytest.raises(ValidationError, match=r"line 4: column 'b'"):
        read_panel_csv(path)
    with pytest.raises(ValidationError, match="line 3"):
        read_panel_csv(_write(tmp_path / "q.csv", "a,b\n1,2\n,4\n"))


def test_bad_and_unordered_dates(tmp_path) -> None:
    with pytest.raises(ValidationError, match="line 3"):
        read_panel_csv(_write(tmp_path / "p.csv", "date,a\n2020-01-01,1\n2020-13-01,2\n"))
    with pytest.raises(ValidationError, match="line 3: dates are not strictly increasing"):
        read_panel_csv(_write(tmp_path / "q.csv", "date,a\n2020-01-02,1\n2020-01-02,2\n"))


def test_dates_found_under_any_header(tmp_path) -> None:
    blank = read_panel_csv(_write(tmp_path / "p.csv", ",a,b\n2020-01-01,0.01,0.02\n2020-01-02,0.03,0.04\n"))
    assert blank.dates == ["2020-01-01", "2020-01-02"]
    assert blank.data.column_ids == ("a", "b")
    named = read_panel_csv(_write(tmp_path / "q.csv", "trading_day,a\n2021-03-01,1\n2021-03-02,2\n"))
    assert named.dates == ["2021-03-01", "2021-03-02"]
    assert named.data.p == 1
    with pytest.raises(ValidationError, match="line 3: dates are not strictly increasing"):
        read_panel_csv(_write(tmp_path / "r.csv", "trading_day,a\n2021-03-02,1\n2021-03-01,2\n"))


def test_missing_file_is_a_validation_error(tmp_path) -> None:
    with pytest.raises(ValidationError):
        read_panel_csv(str(tmp_path / "absent.csv"))


def test_written_panel_reads_back(tmp_path) -> None:
    X = DataMatrix.from_array([[0.1, 2.0], [3.0, -4.25]], ["u", "v"])
    path = str(tmp_path / "out" / "panel.csv")
    write_panel_csv(path, X, dates=["2021-03-01", "2021-03-02"])
    with open(path, encoding="utf-8") as f:
        assert f.readline().startswith("# ClusterPCA 0.1.0 |")
    panel = read_panel_csv(path)
    assert panel.dates == ["2021-03-01", "2021-03-02"]
    assert np.allclose(panel.data.values, X.values)


def test_labels_align_to_columns(tmp_path) -> None:
    path = _write(tmp_path / "labels.csv", "column_id,label\nb,tech\na,utilities\n")
    assert read_labels_csv(path, ("a", "b")).tolist() == [2, 1]
    with pytest.raises(ValidationError, match="no label for c"):
        read_labels_csv(path, ("a", "b", "c"))
    with pytest.raises(ValidationError):
        read_labels_csv(_write(tmp_path / "bad.csv", "name,group\na,1\n"), ("a",))


def test_model_save_and_load(tmp_path, exact_panel) -> None:
    panel = exact_panel()
    model = fit(panel.X, FitConfig(common_rank=3, cluster_rank=2), initial_partition=panel.partition)
    path = str(tmp_path / "model.json")
    save_model(path, model, cmdline="fit panel.csv", seed=3)
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    assert doc["meta"]["seed"] == 3
    assert doc["meta"]["cmdline"] == "fit panel.csv"
    loaded = load_model(path)
    assert np.allclose(loaded.phi, model.phi)
    assert loaded.cluster_ranks == [2, 2, 2]


def test_load_model_rejects_other_files(tmp_path) -> None:
    with pytest.raises(ValidationError):
        load_model(_write(tmp_path / "x.json", '{"hello": 1}'))
    with pytest.raises(ValidationError):
        load_model(_write(tmp_path / "y.json", "not json"))
    with pytest.raises(ValidationError):
        load_model(str(tmp_path / "missing.json"))


def test_covariance_csv_has_column_ids(tmp_path) -> None:
    path = str(tmp_path / "cov.csv")
    write_covariance_csv(path, CovarianceEstimate(np.array([[2.0, 0.5], [0.5, 1.0]]), "sample", ("a", "b")))
    frame = pd.read_csv(path, comment="#")
    assert frame.columns.tolist() == ["column_id", "a", "b"]
    assert frame["a"].tolist() == [2.0, 0.5]


def test_backtest_files(tmp_path) -> None:
    rng = np.random.default_rng(0)
    X = DataMatrix.from_array(rng.normal(0.0, 0.01, (30, 3)))
    result = rolling_backtest(X, window=10, method="sample")
    csv_path, json_path = str(tmp_path / "bt.csv"), str(tmp_path / "bt.json")
    write_backtest(csv_path, json_path, result, cmdline="mvp r.csv", seed=0)
    frame = pd.read_csv(csv_path, comment="#")
    assert frame.columns.tolist() == ["date", "return"]
    assert len(frame) == 20
    with open(json_path, encoding="utf-8") as f:
        doc = json.load(f)
    assert doc["method"] == "sample"
    assert doc["window"] == 10
    assert doc["std"] == pytest.approx(result.metrics.std)


def test_json_meta_and_metadata_line(tmp_path) -> None:
    path = str(tmp_path / "doc.json")
    write_json(path, {"value": 1}, cmdline="cov x.csv", seed=None)
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    assert doc["value"] == 1
    assert doc["meta"]["app"] == "ClusterPCA"
    assert metadata_line("simulate", 5) == "# ClusterPCA 0.1.0 | simulate | seed=5"
