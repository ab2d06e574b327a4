import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from onlinevos.errors import FormatError
from onlinevos.io import (RunConfig, decode_feature_tensor, decode_pgm, decode_ppm,
                          encode_feature_tensor, encode_pgm, encode_ppm, format_run_config,
                          open_sequence, parse_run_config, split_objects, write_pgm, write_ppm)


@given(c=st.integers(1, 4), h=st.integers(1, 5), w=st.integers(1, 5), seed=st.integers(0, 99))
def test_feature_round_trip(c, h, w, seed):
    t = np.random.default_rng(seed).standard_normal((c, h, w)).astype(np.float32)
    data = encode_feature_tensor(t)
    assert len(data) == 24 + 4 * c * h * w
    back = decode_feature_tensor(data)
    np.testing.assert_array_equal(back, t)
    assert encode_feature_tensor(back) == data


def test_feature_header_layout():
    data = encode_feature_tensor(np.zeros((2, 3, 4), np.float32))
    assert data[:4] == b"FTN1"
    assert struct.unpack_from("<5I", data, 4) == (1, 2, 3, 4, 16)


def test_short_payload_offset():
    # 64x10x18 declared, 1001 payload bytes present: error at 24 + 4 * floor(1001 / 4)
    header = b"FTN1" + struct.pack("<5I", 1, 64, 10, 18, 16)
    with pytest.raises(FormatError) as err:
        decode_feature_tensor(header + bytes(1001), "x.ft")
    assert err.value.offset == 24 + 4 * 250
    assert "x.ft" in str(err.value) and "46080" in str(err.value)


@pytest.mark.parametrize("data, offset", [
    (b"FTN2" + bytes(20), 0),
    (b"FTN1" + struct.pack("<5I", 2, 1, 1, 1, 16) + bytes(4), 4),
    (b"FTN1" + struct.pack("<5I", 1, 0, 1, 1, 16), 8),
    (b"FTN1" + struct.pack("<5I", 1, 1, 1, 1, 8) + bytes(4), 20),
    (b"FTN1" + struct.pack("<5I", 1, 1, 1, 1, 16) + bytes(8), 28),
    (b"FTN1\x01", 5),
])
def test_feature_format_errors(data, offset):
    with pytest.raises(FormatError) as err:
        decode_feature_tensor(data)
    assert err.value.offset == offset


def test_netpbm_round_trip_byte_identical(rng):
    img = rng.integers(0, 256, (3, 5, 7), dtype=np.uint8)
    ppm = encode_ppm(img)
    assert ppm.startswith(b"P6\n7 5\n255\n")
    assert encode_ppm(decode_ppm(ppm)) == ppm
    m = np.array([[0, 1, 2], [2, 1, 0]], dtype=np.uint8)
    pgm = encode_pgm(m)
    assert encode_pgm(decode_pgm(pgm)) == pgm
    ids, masks = split_objects(decode_pgm(pgm))
    assert ids == [1, 2]
    np.testing.assert_array_equal(masks[1], (m == 2).astype(float))


def test_netpbm_comments_and_whitespace():
    data = b"P5 # a comment\n 3\t2\n# another\n255\n" + bytes(range(6))
    np.testing.assert_array_equal(decode_pgm(data), np.arange(6).reshape(2, 3))


@pytest.mark.parametrize("data", [b"", b"P6\n1 1\n255\n\x00\x00\x00", b"P5\n2 2\n65535\n" + bytes(8),
                                  b"P5\n2 2\n255\n" + bytes(3), b"P5\n2 2\n255\n" + bytes(5),
                                  b"P5\n0 2\n255\n", b"P5\nx 2\n255\n"])
def test_pgm_errors(data):
    with pytest.raises(FormatError):
        decode_pgm(data)


@given(data=st.binary(max_size=80))
def test_fuzz_never_crashes(data):
    for dec in (decode_feature_tensor, decode_ppm, decode_pgm):
        try:
            dec(data)
        except FormatError:
            pass


@given(suffix=st.binary(max_size=40))
def test_fuzz_valid_prefixes(suffix):
    for prefix, dec in ((b"FTN1", decode_feature_tensor), (b"P6\n", decode_ppm), (b"P5 2 1 255 ", decode_pgm)):
        try:
            dec(prefix + suffix)
        except FormatError:
            pass


def test_run_config_parse_and_format():
    text = "# comment\nmode = fast\neta=0.2  # trailing\n\nk_max=40\nlambda1=0.5\nseed=0\n"
    cfg = parse_run_config(text)
    assert (cfg.mode, cfg.eta, cfg.k_max, cfg.lambda1, cfg.seed) == ("fast", 0.2, 40, 0.5, 0)
    assert parse_run_config(format_run_config(cfg)) == cfg


@pytest.mark.parametrize("text", ["mode=slow", "etaa=0.1", "eta=1.5", "k_max=0", "k_max=2.5",
                                  "novalue", "eta=0.1\neta=0.2", "lambda2=-1", "eta=nan",
                                  "pixel_weight_rule=max"])
def test_run_config_errors(text):
    with pytest.raises(FormatError):
        parse_run_config(text)


def test_run_config_error_offset():
    with pytest.raises(FormatError) as err:
        parse_run_config("mode=ours\nbogus=1\n", "run.cfg")
    assert err.value.offset == 10 and "run.cfg" in str(err.value)


def test_open_sequence(tmp_path, rng):
    (tmp_path / "frames").mkdir()
    (tmp_path / "masks").mkdir()
    for i in range(3):
        write_ppm(tmp_path / "frames" / f"{i:05d}.ppm", rng.integers(0, 256, (3, 4, 5), dtype=np.uint8))
    with pytest.raises(FormatError):
        open_sequence(tmp_path)
    write_pgm(tmp_path / "masks" / "00000.pgm", np.zeros((4, 5), np.uint8))
    seq = open_sequence(tmp_path)
    assert len(seq) == 3 and seq.features_dir is None
    assert seq.frame(1).shape == (3, 4, 5) and seq.frame(1).max() <= 1.0
    (tmp_path / "frames" / "00001.ppm").unlink()
    with pytest.raises(FormatError, match="missing"):
        open_sequence(tmp_path)


def test_default_run_config():
    assert RunConfig().mode == "ours" and RunConfig().toy_channels == 64
