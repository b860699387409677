import numpy as np
import pytest

from src.errors import DataFileError, InvalidInputError
from src.utils import (
    atomic_write_text,
    derive_seed,
    format_count_percentage,
    format_percentage,
    parse_float_list,
    parse_int_list,
    read_key_value_file,
    wrap_angle,
)


def test_derive_seed_is_deterministic_and_key_sensitive():
    assert derive_seed(2018, 1, 2) == derive_seed(2018, 1, 2)
    assert derive_seed(2018, 1, 2) != derive_seed(2018, 2, 1)
    assert 0 <= derive_seed(7) < 2**32


def test_derive_seed_needs_a_key():
    with pytest.raises(InvalidInputError):
        derive_seed()


@pytest.mark.parametrize(
    "angle, expected",
    [(190.0, -170.0), (-180.0, 180.0), (180.0, 180.0), (540.0, 180.0), (-190.0, 170.0), (0.0, 0.0)],
)
def test_wrap_angle(angle, expected):
    assert wrap_angle(angle) == pytest.approx(expected, abs=1e-12)


def test_wrap_angle_keeps_in_range_values_exactly():
    values = np.array([-179.9, -10.123456789, 0.5, 179.99])
    assert np.array_equal(wrap_angle(values), values)


def test_percentage_rendering():
    assert format_percentage(53 / 225) == "23.56%"
    assert format_count_percentage(53, 225) == "53 (23.56%)"
    assert format_count_percentage(54, 225) == "54 (24.00%)"
    assert format_count_percentage(0, 225) == "0 (0.00%)"
    assert format_count_percentage(0, 0) == "0 (0.00%)"


def test_parse_int_list():
    assert parse_int_list("1..5") == [1, 2, 3, 4, 5]
    assert parse_int_list("60,120") == [60, 120]
    with pytest.raises(InvalidInputError):
        parse_int_list("5..1")
    with pytest.raises(InvalidInputError):
        parse_int_list("a,b")


def test_parse_float_list():
    assert parse_float_list("0.2, 0.5") == [0.2, 0.5]
    with pytest.raises(InvalidInputError):
        parse_float_list("x")


def test_atomic_write_creates_parent_directories(tmp_path):
    target = tmp_path / "nested" / "out.txt"
    atomic_write_text(target, "héllo\n")
    assert target.read_text(encoding="utf-8") == "héllo\n"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_atomic_write_removes_temporary_file_on_failure(tmp_path, monkeypatch):
    def fail(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr("src.utils.os.replace", fail)
    with pytest.raises(DataFileError, match="disk full"):
        atomic_write_text(tmp_path / "out.txt", "data")
    assert list(tmp_path.iterdir()) == []


def test_read_key_value_file(tmp_path):
    path = tmp_path / "gen.cfg"
    path.write_text("# comment\nSPS=120\ncap_step_v = 0.02\n", encoding="utf-8")
    assert read_key_value_file(path) == {"sps": "120", "cap_step_v": "0.02"}


def test_read_key_value_file_missing(tmp_path):
    with pytest.raises(DataFileError):
        read_key_value_file(tmp_path / "absent.cfg")
