import json

import numpy as np
import pytest

from pinnbench.domain import DomainSpec, NoiseSpec
from pinnbench.fieldio import (FieldFormatError, read_field, read_solution,
                               write_csv, write_snapshot, write_solution)


def test_solution_roundtrip(small_clean, tmp_path):
    base = tmp_path / "sol"
    write_solution(small_clean, base, noise=None)
    back = read_solution(base)
    assert np.array_equal(back.values, small_clean.values)
    assert back.spec == small_clean.spec
    assert back.grid == small_clean.grid


def test_solution_noise_metadata_roundtrip(small_clean, tmp_path):
    noise = NoiseSpec(seed=9)
    write_solution(small_clean, tmp_path / "s", noise=noise)
    ff = read_field(tmp_path / "s")
    assert ff.noise == noise


def test_snapshot_roundtrip(tmp_path):
    spec = DomainSpec()
    field = np.arange(12.0).reshape(3, 4)
    write_snapshot(field, 0.125, spec, tmp_path / "snap")
    ff = read_field(tmp_path / "snap")
    assert ff.times.tolist() == [0.125]
    assert np.array_equal(ff.single_level(), field)
    assert (ff.nx, ff.ny) == (3, 4)


def test_checksum_detects_tampering(small_clean, tmp_path):
    base = tmp_path / "sol"
    write_solution(small_clean, base)
    data = (tmp_path / "sol.f64")
    raw = bytearray(data.read_bytes())
    raw[100] ^= 0xFF
    data.write_bytes(bytes(raw))
    with pytest.raises(FieldFormatError, match="checksum"):
        read_field(base)


def test_meta_carries_count_and_order(small_clean, tmp_path):
    write_solution(small_clean, tmp_path / "sol")
    meta = json.loads((tmp_path / "sol.meta.json").read_text())
    assert meta["count"] == small_clean.n_points
    assert meta["order"] == "[time][ix][iy] row-major"
    assert meta["dtype"] == "<f8"


def test_read_solution_requires_grid(tmp_path):
    write_snapshot(np.zeros((4, 4)), 0.0, DomainSpec(), tmp_path / "snap")
    with pytest.raises(FieldFormatError, match="grid"):
        read_solution(tmp_path / "snap")


def test_csv_single_level(small_clean, tmp_path):
    path = write_csv(small_clean, tmp_path / "level0.csv", level=0)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,y,u"
    assert len(lines) == 1 + small_clean.grid.nx * small_clean.grid.ny
    t, x, y, u = map(float, lines[1].split(","))
    assert (t, x, y) == (0.0, 0.0, 0.0)
    assert u == small_clean.values[0, 0, 0]


def test_csv_all_levels_count(small_clean, tmp_path):
    path = write_csv(small_clean, tmp_path / "all.csv")
    n_lines = sum(1 for _ in path.open())
    assert n_lines == 1 + small_clean.n_points
