import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stpeval import SequenceTensor, TaskSpec, get_task, slice_window, subsample_temporal
from stpeval.errors import ConfigError, FormatError, RangeError, ShapeError, UnsupportedLayout
from stpeval.npyio import header_bytes, load_array, load_features, read_npy, save_array, write_npy
from stpeval.tensor import TASK_PRESETS, subsample_indices


def seq(T=20, C=1, H=2, W=2, dtype=np.float64):
    data = np.arange(T * C * H * W, dtype=np.float64).reshape(T, C, H, W)
    return SequenceTensor(data.astype(dtype), (0.0, float(T * C * H * W)))


# ---- SequenceTensor ---------------------------------------------------------

def test_rejects_nan_and_inf():
    a = np.zeros((2, 1, 2, 2))
    a[1, 0, 1, 1] = np.nan
    with pytest.raises(ValueError):
        SequenceTensor(a)
    a[1, 0, 1, 1] = np.inf
    with pytest.raises(ValueError):
        SequenceTensor(a)


def test_rejects_bad_shape_range_and_dtype():
    with pytest.raises(ShapeError):
        SequenceTensor(np.zeros((2, 2, 2)))
    with pytest.raises(RangeError):
        SequenceTensor(np.zeros((1, 1, 2, 2)), (1.0, 1.0))
    with pytest.raises(TypeError):
        SequenceTensor(np.zeros((1, 1, 2, 2), dtype=np.int32))


def test_default_ranges_and_immutability():
    u = SequenceTensor(np.zeros((1, 1, 2, 2), dtype=np.uint8))
    f = SequenceTensor(np.zeros((1, 1, 2, 2), dtype=np.float32))
    assert u.value_range == (0.0, 255.0)
    assert f.value_range == (0.0, 1.0)
    with pytest.raises(ValueError):
        f.data[0, 0, 0, 0] = 1.0


def test_caller_array_is_copied():
    a = np.zeros((1, 1, 2, 2))
    x = SequenceTensor(a)
    a[0, 0, 0, 0] = 5
    assert x.data[0, 0, 0, 0] == 0


# ---- windowing --------------------------------------------------------------

def test_slice_full_range_identity():
    x = seq()
    assert slice_window(x, 0, x.T) == x


def test_slice_tail():
    x = seq(T=20)
    y = slice_window(x, 10, 10)
    np.testing.assert_array_equal(y.data, x.data[10:20])
    assert y.value_range == x.value_range


def test_slice_composition():
    x = seq(T=12)
    assert slice_window(slice_window(x, 2, 8), 1, 3) == slice_window(x, 3, 3)


@pytest.mark.parametrize("start,length", [(-1, 2), (19, 2), (0, 21), (5, 0)])
def test_slice_out_of_bounds(start, length):
    with pytest.raises(RangeError):
        slice_window(seq(T=20), start, length)


def test_subsample_dt1_is_contiguous():
    x = seq(T=20)
    inp, tgt = subsample_temporal(x, 1, 10, 10)
    np.testing.assert_array_equal(inp.data, x.data[:10])
    np.testing.assert_array_equal(tgt.data, x.data[10:20])


def test_subsample_dt2_indices():
    x = seq(T=7)
    inp, tgt = subsample_temporal(x, 2, 2, 2)
    np.testing.assert_array_equal(inp.data, x.data[[0, 2]])
    np.testing.assert_array_equal(tgt.data, x.data[[4, 6]])


def test_subsample_too_short():
    with pytest.raises(RangeError):
        subsample_temporal(seq(T=6), 2, 2, 2)


def test_subsample_scales_frame_interval():
    x = SequenceTensor(np.zeros((7, 1, 2, 2)), frame_interval=6.0)
    inp, _ = subsample_temporal(x, 3, 1, 1)
    assert inp.frame_interval == 18.0


@given(dt=st.integers(1, 6), l_in=st.integers(1, 12), l_s=st.integers(1, 12))
def test_subsample_indices_match_formula(dt, l_in, l_s):
    assert subsample_indices(dt, l_in, l_s) == oracles.subsample_indices(dt, l_in, l_s)


def test_robustness_multipliers_default():
    assert TaskSpec("t", 2, 10).dt_multipliers == (1, 2, 3)


# ---- TaskSpec ---------------------------------------------------------------

def test_taskspec_invariants():
    with pytest.raises(ConfigError):
        TaskSpec("t", 0, 1)
    with pytest.raises(ConfigError):
        TaskSpec("t", 2, 10, l_l=10)
    with pytest.raises(ConfigError):
        TaskSpec("t", 2, 10, dt_multipliers=(1, 3, 2))
    with pytest.raises(ConfigError):
        TaskSpec("t", 2, 10, dt_multipliers=(0, 1))


def test_task_presets_match_benchmark_table():
    mm = TASK_PRESETS["moving_mnist"]
    assert (mm.channels, mm.height, mm.width, mm.l_in, mm.l_s, mm.l_l) == (1, 64, 64, 10, 10, None)
    assert (mm.n_val, mm.n_test) == (10_000, 10_000)
    bd = TASK_PRESETS["bridgedata"]
    assert (bd.l_in, bd.l_s, bd.l_l) == (2, 10, 30)
    assert TASK_PRESETS["nuscenes"].l_l == 30
    wb = TASK_PRESETS["weatherbench"]
    assert (wb.channels, wb.height, wb.width, wb.l_in, wb.l_s, wb.l_l) == (69, 128, 256, 2, 1, 20)
    enso = TASK_PRESETS["icar_enso"]
    assert (enso.height, enso.width, enso.l_in, enso.l_s) == (24, 48, 12, 14)
    assert TASK_PRESETS["sevir"].options["csi_thresholds"] == [16, 74, 133, 160, 181, 219]
    assert len(TASK_PRESETS) == 15


def test_taskspec_json_roundtrip(tmp_path):
    t = TASK_PRESETS["sevir"]
    p = tmp_path / "task.json"
    import json
    p.write_text(json.dumps(t.to_dict()))
    assert get_task(str(p)) == t
    with pytest.raises(ConfigError):
        get_task("no-such-task")


# ---- NPY I/O ----------------------------------------------------------------

def test_hand_built_npy_file(tmp_path):
    values = [0.5, -1.25, 3.0, 7.75, 1e-3, 2.0, -0.0, 100.0]
    header = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 1, 2, 2), }"
    # 10-byte prefix + 65 chars + 52 spaces + newline = 128
    header = header + " " * 52 + "\n"
    raw = b"\x93NUMPY\x01\x00" + struct.pack("<H", 118) + header.encode() + struct.pack("<8f", *values)
    path = tmp_path / "hand.npy"
    path.write_bytes(raw)
    x = load_array(path)
    assert x.shape == (2, 1, 2, 2)
    assert x.data.dtype == np.float32
    assert x.data.ravel().tolist() == [np.float32(v) for v in values]


def test_header_padding_multiple_of_64():
    for shape in [(2, 1, 2, 2), (20, 1, 64, 64), (1, 69, 128, 256), (5, 3)]:
        for descr in ("<f4", "<f8", "|u1"):
            h = header_bytes(descr, shape)
            assert len(h) % 64 == 0
            assert h.endswith(b"\n")


@pytest.mark.parametrize("dtype", [np.float32, np.float64, np.uint8])
def test_bytes_identical_to_numpy_save(tmp_path, dtype):
    rng = np.random.default_rng(0)
    a = (rng.random((3, 2, 4, 5)) * 200).astype(dtype)
    path = tmp_path / "a.npy"
    save_array(SequenceTensor(a, (0.0, 255.0)), path)
    buf = io.BytesIO()
    np.save(buf, a)
    assert path.read_bytes() == buf.getvalue()


@settings(max_examples=30, deadline=None)
@given(
    dtype=st.sampled_from([np.float32, np.float64, np.uint8]),
    shape=st.tuples(st.integers(1, 4), st.integers(1, 3), st.integers(1, 5), st.integers(1, 5)),
    seed=st.integers(0, 2**32 - 1),
)
def test_roundtrip_bitwise(tmp_path_factory, dtype, shape, seed):
    rng = np.random.default_rng(seed)
    if dtype is np.uint8:
        a = rng.integers(0, 256, shape).astype(np.uint8)
    else:
        a = (rng.standard_normal(shape) * 10.0 ** rng.integers(-30, 30)).astype(dtype)
    x = SequenceTensor(a, (-1.0, 1.0))
    path = tmp_path_factory.mktemp("rt") / "x.npy"
    save_array(x, path)
    y = load_array(path, (-1.0, 1.0))
    assert y.data.dtype == a.dtype
    assert y.data.tobytes() == a.tobytes()


def test_u8_default_range(tmp_path):
    save_array(SequenceTensor(np.full((1, 1, 2, 2), 7, np.uint8)), tmp_path / "u.npy")
    assert load_array(tmp_path / "u.npy").value_range == (0.0, 255.0)


def test_fortran_order_rejected(tmp_path):
    raw = bytearray(header_bytes("<f8", (1, 1, 2, 2)))
    raw = raw.replace(b"'fortran_order': False", b"'fortran_order': True ")
    path = tmp_path / "f.npy"
    path.write_bytes(bytes(raw) + b"\0" * 32)
    with pytest.raises(UnsupportedLayout):
        load_array(path)


def test_bad_magic_and_version(tmp_path):
    good = header_bytes("<f8", (1, 1, 1, 1)) + b"\0" * 8
    (tmp_path / "m.npy").write_bytes(b"\x93NUMPZ" + good[6:])
    with pytest.raises(FormatError):
        load_array(tmp_path / "m.npy")
    (tmp_path / "v.npy").write_bytes(good[:6] + b"\x02\x00" + good[8:])
    with pytest.raises(FormatError):
        load_array(tmp_path / "v.npy")
    (tmp_path / "t.npy").write_bytes(good[:-1])
    with pytest.raises(FormatError):
        load_array(tmp_path / "t.npy")


def test_unsupported_descr(tmp_path):
    np.save(tmp_path / "i.npy", np.zeros((1, 1, 1, 1), dtype=np.int32))
    with pytest.raises(FormatError):
        load_array(tmp_path / "i.npy")


def test_non_4d_rejected(tmp_path):
    write_npy(tmp_path / "two.npy", np.zeros((3, 4)))
    with pytest.raises(ShapeError):
        load_array(tmp_path / "two.npy")
    assert load_features(tmp_path / "two.npy").shape == (3, 4)


def test_nan_payload_rejected(tmp_path):
    np.save(tmp_path / "nan.npy", np.full((1, 1, 2, 2), np.nan))
    with pytest.raises(ValueError):
        load_array(tmp_path / "nan.npy")


def test_reads_numpy_written_files(tmp_path):
    a = np.linspace(0, 1, 24).reshape(2, 3, 2, 2)
    np.save(tmp_path / "np.npy", a)
    assert read_npy(tmp_path / "np.npy").tobytes() == a.tobytes()
