import numpy as np
import pytest
from hypothesis import given, strategies as st

from faradaytrap import formats, rng


def test_uniform_is_counter_addressable():
    key = rng.stream_key(7, "x")
    full = rng.uniform(key, np.arange(1000))
    np.testing.assert_array_equal(full[500:510], rng.uniform(key, np.arange(500, 510)))
    assert 0.0 <= full.min() and full.max() < 1.0
    assert abs(full.mean() - 0.5) < 0.03


def test_numba_and_numpy_streams_agree():
    key = rng.stream_key(3, "kinetics", 5)
    ref = rng.uniform(key, np.arange(20))
    got = [rng.uniform_nb(np.uint64(key), np.uint64(c)) for c in range(20)]
    np.testing.assert_array_equal(ref, got)


def test_labels_separate_streams():
    a = rng.uniform(rng.stream_key(1, "a"), np.arange(100))
    b = rng.uniform(rng.stream_key(1, "b"), np.arange(100))
    assert not np.allclose(a, b)
    assert rng.stream_key(1, "a") == rng.stream_key(1, "a")


def test_normal_moments():
    z = rng.normal(rng.stream_key(0, "n"), np.arange(200_000))
    assert abs(z.mean()) < 0.01
    assert z.std() == pytest.approx(1.0, abs=0.01)


def test_pgm_round_trip(tmp_path):
    img = (np.arange(12 * 7) % 256).astype(np.uint8).reshape(7, 12)
    p = formats.write_pgm(tmp_path / "a.pgm", img, comment="two\nlines")
    np.testing.assert_array_equal(formats.read_pgm(p), img)
    assert p.read_bytes().startswith(b"P5\n# two\n# lines\n12 7\n255\n")


def test_graymap_linear():
    g = formats.to_graymap([[0.0, 0.5, 1.0]])
    np.testing.assert_array_equal(g, [[0, 128, 255]])
    assert formats.to_graymap(np.ones((2, 2))).max() == 0


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1,
                max_size=20))
def test_csv_round_trip_bit_exact(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("csv") / "v.csv"
    formats.write_csv(p, {"a": values, "b": np.arange(len(values))}, ["hello"])
    head, names, data = formats.read_csv(p)
    assert head == ["hello"] and names == ["a", "b"]
    np.testing.assert_array_equal(data[:, 0], np.array(values))


def test_kv_round_trip_and_errors():
    m = {"x_s": 1.5e-3, "n": 3, "flag": True, "name": "rect", "v_hz": [60.0, 180.0],
         "words": ["trapped", "untrapped"], "empty": []}
    assert formats.parse_kv(formats.format_kv(m)) == m
    with pytest.raises(formats.FormatError) as err:
        formats.parse_kv("a = 1\nbroken line\n", source="f.txt")
    assert err.value.line == 2 and "f.txt:2" in str(err.value)
    with pytest.raises(formats.FormatError):
        formats.parse_kv("a = 1\na = 2\n")


def test_csv_bad_row_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# h\na,b\n1,2\n3\n")
    with pytest.raises(formats.FormatError) as err:
        formats.read_csv(p)
    assert err.value.line == 4
