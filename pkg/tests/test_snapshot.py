import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gppd.discretization import Field, build_grid
from gppd.errors import GridError
from gppd.snapshot import read_field, write_field

GRIDS = [build_grid(16, 4.0), build_grid(32, 6.0)]


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(GRIDS), st.booleans(), st.integers(0, 2**32 - 1))
def test_roundtrip_bit_identical(tmp_path_factory, grid, cplx, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.shape)
    if cplx:
        v = v + 1j * rng.standard_normal(grid.shape)
    path = tmp_path_factory.mktemp("snap") / "f.gpf"
    write_field(path, Field(grid, v))
    back = read_field(path, grid)
    assert back.values.dtype == v.dtype
    assert back.values.tobytes() == v.tobytes()
    assert (back.grid.n, back.grid.L) == (grid.n, grid.L)


def test_header_layout(tmp_path):
    g = GRIDS[0]
    p = write_field(tmp_path / "a.gpf", Field(g, np.ones(g.shape)))
    raw = p.read_bytes()
    assert raw[:4] == b"GPF1"
    n, L, flag = struct.unpack_from("<IdB", raw, 4)
    assert (n, L, flag) == (16, 4.0, 0)
    assert len(raw) == 17 + 16 * 16 * 8
    # row-major: second sample is x index 0, y index 1
    v = np.arange(256.0).reshape(16, 16)
    write_field(p, Field(g, v))
    assert struct.unpack_from("<2d", p.read_bytes(), 17) == (0.0, 1.0)


def test_corrupt_files_rejected(tmp_path):
    g = GRIDS[0]
    p = write_field(tmp_path / "a.gpf", Field(g, np.ones(g.shape)))
    raw = p.read_bytes()
    cases = {
        "trunc_header": raw[:10],
        "trunc_body": raw[:-8],
        "magic": b"XYZ1" + raw[4:],
        "version": b"GPF2" + raw[4:],
        "flag": raw[:16] + b"\x07" + raw[17:],
    }
    for name, data in cases.items():
        q = tmp_path / f"{name}.gpf"
        q.write_bytes(data)
        with pytest.raises(GridError):
            read_field(q)


def test_grid_mismatch_names_both_grids(tmp_path):
    p = write_field(tmp_path / "a.gpf", Field(GRIDS[0], np.ones(GRIDS[0].shape)))
    with pytest.raises(GridError, match=r"n=16.*n=32"):
        read_field(p, GRIDS[1])
