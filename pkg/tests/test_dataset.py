import numpy as np
import pytest

from soundloc.acoustics import RoomSpec, render_mixture, sample_scene
from soundloc.dataset import read_dataset, write_dataset
from soundloc.errors import FormatError

from conftest import small_recordings


def test_round_trip_bit_exact(room, tmp_path):
    recs = [r.as_float32() for r in small_recordings(room, 3, M=5, K=2, U=1)]
    path = tmp_path / "d.slds"
    write_dataset(recs, path)
    back = read_dataset(path)
    assert len(back) == 3
    for a, b in zip(recs, back):
        assert a == b
        assert b.channels.dtype == np.float32
        assert b.known_mask.tolist() == a.known_mask.tolist()


def test_empty_dataset(tmp_path):
    write_dataset([], tmp_path / "e.slds")
    assert read_dataset(tmp_path / "e.slds") == []


def test_truncated_file(room, tmp_path):
    path = tmp_path / "d.slds"
    write_dataset(small_recordings(room, 2), path)
    data = path.read_bytes()
    for cut in (3, 10, len(data) // 2, len(data) - 1):
        (tmp_path / "t.slds").write_bytes(data[:cut])
        with pytest.raises(FormatError):
            read_dataset(tmp_path / "t.slds")


def test_checksum_mismatch(room, tmp_path):
    path = tmp_path / "d.slds"
    write_dataset(small_recordings(room, 1), path)
    data = bytearray(path.read_bytes())
    data[-5] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="(?i)crc|checksum"):
        read_dataset(path)


def test_bad_magic_and_version(room, tmp_path):
    path = tmp_path / "d.slds"
    write_dataset([], path)
    raw = path.read_bytes()
    (tmp_path / "m.slds").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        read_dataset(tmp_path / "m.slds")
    bumped = raw.replace(b'"format_version": 1', b'"format_version": 9')
    assert bumped != raw
    (tmp_path / "v.slds").write_bytes(bumped)
    with pytest.raises(FormatError, match="version"):
        read_dataset(tmp_path / "v.slds")


def test_float64_recording_rounds_to_float32(room, tmp_path):
    rec = small_recordings(room, 1)[0]
    write_dataset([rec], tmp_path / "d.slds")
    back = read_dataset(tmp_path / "d.slds")[0]
    assert np.array_equal(back.channels, rec.channels.astype(np.float32))
