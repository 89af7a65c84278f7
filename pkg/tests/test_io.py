import json
import struct

import numpy as np
import pytest

from langevin_lab.fokker_planck import Grid, build_generator
from langevin_lab.io import (HEADER, JsonlSink, read_csv, read_positions, snapshot_record,
                             write_csv, write_field, write_positions)
from langevin_lab.objective import squared_norm
from langevin_lab.sde_sim import EnsembleSnapshot


def test_binary_layout(tmp_path, rng):
    pos = rng.standard_normal((5, 3))
    write_positions(tmp_path / "p.llab", pos, 1.25)
    raw = (tmp_path / "p.llab").read_bytes()
    assert len(raw) == 32 + 5 * 3 * 8
    magic, version, n, d, t = struct.unpack("<4sIQQd", raw[:32])
    assert (magic, version, n, d, t) == (b"LLAB", 1, 5, 3, 1.25)
    np.testing.assert_array_equal(np.frombuffer(raw[32:], "<f8").reshape(5, 3), pos)
    back, t = read_positions(tmp_path / "p.llab")
    np.testing.assert_array_equal(back, pos)
    assert HEADER.size == 32


def test_bad_magic(tmp_path):
    (tmp_path / "x.llab").write_bytes(b"XXXX" + bytes(28))
    with pytest.raises(ValueError):
        read_positions(tmp_path / "x.llab")


def test_field_with_sidecar(tmp_path):
    gen = build_generator(Grid(((-1.0, 1.0),), 16), squared_norm(1), 1.0)
    f = gen.field(np.linspace(0, 1, 17), t=0.5)
    main, side = write_field(tmp_path / "phi.llab", f)
    phi, t = read_positions(main)
    nodes, _ = read_positions(side)
    assert t == 0.5 and phi.shape == (17, 1)
    np.testing.assert_array_equal(nodes, gen.grid.nodes)


def test_csv_round_trip(tmp_path):
    write_csv(tmp_path / "o.csv", ["t", "a"], [[0.0, 1 / 3], [1.0, float("nan")]])
    cols, arr = read_csv(tmp_path / "o.csv")
    assert cols == ["t", "a"]
    assert arr[0, 1] == 1 / 3
    assert np.isnan(arr[1, 1])


def test_jsonl_records(tmp_path):
    snap = EnsembleSnapshot(0.5, np.ones((3, 2)), np.ones(3), step=5)
    with JsonlSink(tmp_path / "s.jsonl") as sink:
        sink.write(snapshot_record(snap, squared_norm(2)))
        sink.write(snapshot_record(snap, include_positions=False))
    lines = (tmp_path / "s.jsonl").read_text().splitlines()
    a, b = (json.loads(x) for x in lines)
    assert a["positions"] == [[1.0, 1.0]] * 3 and a["gap_mean"] == 2.0
    assert "positions" not in b and b["step"] == 5
