"""TEP CSV reader: column schemas, header and label handling, error reporting."""

from __future__ import annotations

import numpy as np
import pytest

from faultxai.errors import CSVParseError, MissingArtifactError, SchemaError
from faultxai.procsim import NORMAL, TEP_SCHEMAS, idv_label, ingest_tep_csv, ingest_tep_files, read_tep_csv, tep_channels


def write_csv(path, data, header=None, fmt=".6f"):
    lines = [",".join(header)] if header else []
    lines += [",".join(format(v, fmt) if isinstance(v, float) else str(v) for v in row) for row in data]
    path.write_text("\n".join(lines) + "\n")
    return path


def synthetic(T=960, M=52, seed=0):
    return np.random.default_rng(seed).normal(size=(T, M)) * 10 + 50


def test_schema_names():
    ch = tep_channels(52)
    assert len(ch) == 52 and ch[0] == "xmeas_1" and ch[40] == "xmeas_41" and ch[41] == "xmv_1" and ch[-1] == "xmv_11"
    assert TEP_SCHEMAS[53][-1] == "xmv_12"
    with pytest.raises(SchemaError):
        tep_channels(50)


def test_headerless_52_columns(tmp_path):
    raw = synthetic()
    path = write_csv(tmp_path / "d.csv", raw.tolist())
    data, labels = read_tep_csv(path)
    assert data.shape == (960, 52) and labels is None
    np.testing.assert_allclose(data, raw, atol=5e-7)
    ds = ingest_tep_csv(path)
    assert ds.schema == tep_channels(52)
    assert ds.class_labels == [NORMAL] and ds.runs[0].onset_index is None


def test_header_row_is_skipped(tmp_path):
    raw = synthetic(T=30)
    path = write_csv(tmp_path / "h.csv", raw.tolist(), header=tep_channels(52))
    data, _ = read_tep_csv(path)
    assert data.shape == (30, 52)


def test_wrong_width_lists_schemas(tmp_path):
    path = write_csv(tmp_path / "w.csv", synthetic(T=5, M=10).tolist())
    with pytest.raises(SchemaError) as err:
        read_tep_csv(path)
    msg = str(err.value)
    assert "got 10" in msg and "52" in msg and "53" in msg


def test_bad_cell_reports_row_and_column(tmp_path):
    rows = synthetic(T=5).tolist()
    rows[2][6] = "NA"
    path = write_csv(tmp_path / "na.csv", rows)
    with pytest.raises(CSVParseError) as err:
        read_tep_csv(path)
    assert (err.value.row, err.value.col, err.value.value) == (3, 7, "NA")


def test_nan_cell_rejected(tmp_path):
    rows = synthetic(T=3).tolist()
    rows[0][0] = "nan"
    with pytest.raises(CSVParseError):
        read_tep_csv(write_csv(tmp_path / "nan.csv", rows))


def test_53_column_schema(tmp_path):
    path = write_csv(tmp_path / "d53.csv", synthetic(T=20, M=53).tolist())
    data, _ = read_tep_csv(path, schema=53)
    assert data.shape == (20, 53)
    with pytest.raises(SchemaError):
        read_tep_csv(path, schema=52)  # 53 columns read as 52 + a non-integer label column


def test_label_column_sets_fault_and_onset(tmp_path):
    raw = synthetic(T=40)
    labels = [0] * 15 + [11] * 25
    rows = [list(r) + [lab] for r, lab in zip(raw.tolist(), labels)]
    path = write_csv(tmp_path / "lab.csv", rows)
    data, lab = read_tep_csv(path)
    assert data.shape == (40, 52) and lab.tolist() == labels
    ds = ingest_tep_csv(path)
    assert ds.class_labels == [NORMAL, "IDV11"]
    assert ds.runs[0].onset_index == 15
    # normal rows drive the standardization
    np.testing.assert_allclose(ds.mean, raw[:15].mean(axis=0))


def test_mixed_fault_labels_rejected(tmp_path):
    rows = [list(r) + [lab] for r, lab in zip(synthetic(T=4).tolist(), [0, 1, 2, 2])]
    with pytest.raises(SchemaError, match="mixes"):
        ingest_tep_csv(write_csv(tmp_path / "m.csv", rows))


def test_explicit_label_and_several_files(tmp_path):
    a = write_csv(tmp_path / "a.csv", synthetic(T=50, seed=1).tolist())
    b = write_csv(tmp_path / "b.csv", synthetic(T=50, seed=2).tolist())
    ds = ingest_tep_files([(a, None, None), (b, 4, 20)])
    assert ds.class_labels == [NORMAL, "IDV4"]
    assert [r.label for r in ds.runs] == [NORMAL, "IDV4"]
    assert ds.runs[1].onset_index == 20
    assert idv_label(0) == NORMAL and idv_label(13) == "IDV13"


def test_missing_file(tmp_path):
    with pytest.raises(MissingArtifactError):
        ingest_tep_csv(tmp_path / "absent.csv")
