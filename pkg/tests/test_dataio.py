import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wvcal.dataio import (
    REGISTRY,
    Channel,
    DataError,
    ImuBinarySchema,
    SensorDataset,
    get_schema,
    load_schema,
    parse_columns,
    read_imu_binary,
    read_table,
    write_imu_binary,
    write_table,
)

FIX = Path(__file__).parent / "fixtures"


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_binary_round_trip_is_bit_identical(name, tmp_path):
    src = FIX / f"imu_{name}.bin"
    ds = read_imu_binary(src, name, freq=100.0)
    out = tmp_path / "copy.bin"
    write_imu_binary(out, ds, name)
    assert out.read_bytes() == src.read_bytes()


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_binary_fixture_contents(name):
    ds = read_imu_binary(FIX / f"imu_{name}.bin", name, freq=100.0)
    assert len(ds) == 64
    assert ds.labels == ["gyro:X", "gyro:Y", "gyro:Z", "accel:X", "accel:Y", "accel:Z"]
    np.testing.assert_array_equal(ds.time, np.arange(64) / 100.0)
    assert ds.source["imu_type"] == name
    k = np.arange(64.0)
    if name == "NAVCHIP_INT":
        np.testing.assert_array_equal(ds.channel("gyro:Y").samples, np.round(1000 * np.sin(0.1 * 2 * k)))
    else:
        np.testing.assert_array_equal(ds.channel("accel:Z").samples, np.sin(0.1 * 6 * k) * 100.0)


def test_record_layout_by_hand():
    # 7 little-endian float64 per record, time first
    raw = (FIX / "imu_IMAR.bin").read_bytes()
    rec = np.frombuffer(raw[:56], dtype="<f8")
    ds = read_imu_binary(FIX / "imu_IMAR.bin", "IMAR")
    assert rec[0] == ds.time[0]
    assert rec[1] == ds.channels[0].samples[0] and rec[6] == ds.channels[5].samples[0]
    assert get_schema("imar").record_size == 56
    assert get_schema("navchip_int").record_size == 8 + 6 * 4


def test_custom_schema_round_trip(tmp_path):
    schema = load_schema(FIX / "schema_custom.json")
    assert schema.header_bytes == 16 and schema.dtypes[1] == ">i4" and schema.scale[4] == 2.0
    ds = read_imu_binary(FIX / "imu_custom.bin", schema)
    k = np.arange(64.0)
    # stored as value / scale, read back as stored * scale
    np.testing.assert_array_equal(ds.channel("gyro:X").samples, np.round(1000 * np.sin(0.1 * k)))
    raw = np.frombuffer((FIX / "imu_custom.bin").read_bytes()[16:], dtype=schema.record_dtype)
    np.testing.assert_array_equal(raw["gyro_x"], 2 * np.round(1000 * np.sin(0.1 * k)))
    out = tmp_path / "c.bin"
    write_imu_binary(out, ds, schema, header=b"WVCALFIXTURE0001")
    assert out.read_bytes() == (FIX / "imu_custom.bin").read_bytes()


def test_schema_with_base(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"base": "LN200", "fields": [{"name": "gyro_z", "scale": 1e-3}]}))
    s = load_schema(p)
    assert s.name == "LN200" and s.scale[3] == 1e-3 and s.dtypes == ("<f8",) * 7


@pytest.mark.parametrize(
    "content",
    ['{"fields": [{"name": "gyro_w"}]}', '{"fields": [{"name": "time", "dtype": "S8"}]}', '{"fields": [{"name": "time", "scale": 0}]}', "not json"],
)
def test_bad_schema_files(content, tmp_path):
    p = tmp_path / "s.json"
    p.write_text(content)
    with pytest.raises(DataError):
        load_schema(p)


def test_unknown_imu_type():
    with pytest.raises(DataError, match="unknown imu_type"):
        get_schema("PosProc")


def test_truncated_file(tmp_path):
    p = tmp_path / "t.bin"
    p.write_bytes((FIX / "imu_IMAR.bin").read_bytes()[:-3])
    with pytest.raises(DataError, match="truncated"):
        read_imu_binary(p, "IMAR")
    p.write_bytes(b"")
    with pytest.raises(DataError, match="no records"):
        read_imu_binary(p, "IMAR")


def test_nan_after_scaling(tmp_path):
    rec = np.zeros(2, dtype=get_schema("IMAR").record_dtype)
    rec["gyro_x"][1] = np.nan
    p = tmp_path / "n.bin"
    p.write_bytes(rec.tobytes())
    with pytest.raises(DataError, match="non-finite"):
        read_imu_binary(p, "IMAR")


def test_header_length_checked(tmp_path):
    ds = read_imu_binary(FIX / "imu_IMAR.bin", "IMAR")
    with pytest.raises(DataError):
        write_imu_binary(tmp_path / "x.bin", ds, "IMAR", header=b"xx")


def test_schema_validation():
    with pytest.raises(DataError):
        ImuBinarySchema("x", ("<f8",) * 6)
    with pytest.raises(DataError):
        ImuBinarySchema("x", header_bytes=-1)


@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e300, 1e300)), st.sampled_from(sorted(REGISTRY)))
@settings(max_examples=50, deadline=None)
def test_float_round_trip_property(v, name):
    schema = REGISTRY[name]
    if any(np.dtype(d).kind in "iu" for d in schema.dtypes):
        v = np.clip(np.round(v), -2**31, 2**31 - 1)
    chans = tuple(Channel(k, a, v.copy()) for k in ("gyro", "accel") for a in "XYZ")
    ds = SensorDataset(chans, 1.0, np.arange(v.size, dtype=float))
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "x.bin"
        write_imu_binary(p, ds, schema)
        back = read_imu_binary(p, schema)
    for c in back.channels:
        np.testing.assert_array_equal(c.samples, v)


# -- tables ---------------------------------------------------------------------------------


def test_parse_columns():
    assert parse_columns("1:3") == [1, 2, 3]
    assert parse_columns("2, 5,7:8") == [2, 5, 7, 8]
    assert parse_columns([4]) == [4]
    assert parse_columns(None) is None
    with pytest.raises(DataError):
        parse_columns("0:2")


def test_read_table_with_header_and_comments():
    text = "# recorded 2020\nt,gx,gy\n0,1.5,2\n# mid comment\n1,2.5,3\n"
    ds = read_table(io.StringIO(text), freq=50.0)
    assert ds.labels == ["signal:1", "signal:2", "signal:3"]
    assert ds.channel("gx").samples.tolist() == [1.5, 2.5]
    assert ds.channel(2).samples.tolist() == [2.0, 3.0]
    assert ds.freq == 50.0


def test_read_table_gyro_accel_columns():
    text = "\n".join(" ".join(str(10 * r + c) for c in range(1, 8)) for r in range(4))
    ds = read_table(io.StringIO(text), gyro_cols="2:4", accel_cols="5:7")
    assert ds.labels == ["gyro:X", "gyro:Y", "gyro:Z", "accel:X", "accel:Y", "accel:Z"]
    assert ds.channel("accel:Y").samples.tolist() == [6, 16, 26, 36]


@pytest.mark.parametrize("delim, sep", [("\t", "\t"), (";", ";"), (",", ",")])
def test_delimiter_sniffing(delim, sep):
    text = f"1{sep}2\n3{sep}4\n"
    assert read_table(io.StringIO(text)).channel(1).samples.tolist() == [2.0, 4.0]
    assert read_table(io.StringIO(text), delimiter=delim).channel(0).samples.tolist() == [1.0, 3.0]


@pytest.mark.parametrize(
    "text, match",
    [("", "empty"), ("# only\n", "empty"), ("a,b\n", "no data"), ("1,2\n3\n", "ragged"), ("1,2\n3,x\n", "non-numeric")],
)
def test_table_errors(text, match):
    with pytest.raises(DataError, match=match):
        read_table(io.StringIO(text))


def test_column_out_of_range():
    with pytest.raises(DataError, match="out of range"):
        read_table(io.StringIO("1,2\n"), gyro_cols="3")


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        read_table(tmp_path / "nope.csv")


def test_channel_lookup_errors():
    ds = read_table(io.StringIO("1,2\n3,4\n"))
    with pytest.raises(DataError):
        ds.channel("gyro:X")
    with pytest.raises(DataError):
        ds.channel(5)


def test_dataset_validation():
    a = Channel("gyro", "X", np.zeros(3))
    with pytest.raises(DataError):
        SensorDataset((a, Channel("gyro", "Y", np.zeros(4))))
    with pytest.raises(DataError):
        SensorDataset((a, a))
    with pytest.raises(DataError):
        SensorDataset((Channel("mag", "X", np.zeros(3)),))
    with pytest.raises(DataError):
        SensorDataset(())
    with pytest.raises(DataError):
        SensorDataset((a,), freq=0.0)


def test_write_table_round_trip(tmp_path):
    v = np.array([0.1, 1 / 3, -2e-300])
    p = tmp_path / "t.csv"
    write_table(p, [("a", v), ("b", v * 2)], comment="made by test")
    lines = p.read_text().splitlines()
    assert lines[0] == "# made by test" and lines[1] == "a,b"
    back = read_table(p)
    np.testing.assert_array_equal(back.channel("a").samples, v)
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    assert len(rows) == 4
