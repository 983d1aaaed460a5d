import numpy as np
import pytest

from adaptive_rpeak.corpus import (
    FIXTURE_KINDS,
    FIXTURE_SPECS,
    INTENSITY_CLASSES,
    MANIFEST_NAME,
    fetch_open_dataset,
    fixture_thresholds,
    fixtures_dir,
    load_fixtures,
    loo_thresholds,
    prepare_fixtures,
    read_manifest,
    sha256_file,
)
from adaptive_rpeak.errors import FormatError, IntegrityError


def test_committed_fixtures_verify():
    entries = load_fixtures()
    assert len(entries) == len(FIXTURE_SPECS)
    assert {e.segment_class for e in entries} <= set(INTENSITY_CLASSES)
    for kind in FIXTURE_KINDS:
        assert any(e.id.startswith(kind) for e in entries)


def test_fixtures_regenerate_byte_identical(tmp_path):
    prepare_fixtures(tmp_path)
    for e in load_fixtures():
        assert sha256_file(tmp_path / e.path.name) == e.checksum
        assert (tmp_path / e.annotation_path.name).read_bytes() == e.annotation_path.read_bytes()
    assert (tmp_path / MANIFEST_NAME).read_text() == (fixtures_dir() / MANIFEST_NAME).read_text()


def test_fixture_loads_with_annotations():
    rec, ann = load_fixtures()[0].load()
    assert rec.fs == 250 and len(rec) == 6250
    assert len(ann) > 20 and ann.indices[-1] < len(rec)


def test_corruption_is_detected(tmp_path):
    entries = prepare_fixtures(tmp_path, ids={"stationary_a"})
    path = entries[0].path
    data = bytearray(path.read_bytes())
    data[-3] = ord("9") if data[-3] != ord("9") else ord("8")
    path.write_bytes(bytes(data))
    with pytest.raises(IntegrityError):
        load_fixtures(directory=tmp_path)
    with pytest.raises(IntegrityError):
        entries[0].load()


def test_missing_file_is_an_integrity_error(tmp_path):
    entries = prepare_fixtures(tmp_path, ids={"stationary_a"})
    entries[0].path.unlink()
    with pytest.raises(IntegrityError):
        load_fixtures(directory=tmp_path)


def test_manifest_format(tmp_path):
    p = tmp_path / MANIFEST_NAME
    p.write_text("id,class,path,checksum\n# comment\ns1,VO2max,s1.csv,abc\n")
    (e,) = read_manifest(p)
    assert (e.id, e.segment_class, e.path.name, e.checksum) == ("s1", "VO2max", "s1.csv", "abc")
    p.write_text("s1,VO2max,s1.csv\n")
    with pytest.raises(FormatError):
        read_manifest(p)


def test_fetch_from_file_url(tmp_path):
    src = tmp_path / "remote"
    prepare_fixtures(src, ids={"stationary_a", "hr_ramp_a"})
    got = fetch_open_dataset((src / MANIFEST_NAME).as_uri(), tmp_path / "local")
    assert [e.id for e in got] == ["stationary_a", "hr_ramp_a"]
    for e in got:
        e.verify()
        assert e.annotation_path.exists()


def test_fetch_rejects_corrupt_download(tmp_path):
    src = tmp_path / "remote"
    (entry,) = prepare_fixtures(src, ids={"stationary_a"})
    entry.path.write_text(entry.path.read_text() + "1.0\n")
    dest = tmp_path / "local"
    with pytest.raises(IntegrityError):
        fetch_open_dataset((src / MANIFEST_NAME).as_uri(), dest)
    assert not (dest / entry.path.name).exists()


def test_loo_thresholds_ignore_excluded_segment(tmp_path):
    entries = prepare_fixtures(tmp_path)
    a = loo_thresholds(entries, "amp_step_a")
    (tmp_path / "amp_step_a.peaks").write_text("0\n10\n11\n2000\n")
    b = loo_thresholds(entries, "amp_step_a")
    assert a == b and a.excluded_subject == "amp_step_a"


def test_shipped_thresholds():
    t = fixture_thresholds()
    assert (t.p_low, t.p_high) == (0.64, 1.47)


def test_fixture_specs_are_distinct():
    seeds = [spec.seed for _, spec in FIXTURE_SPECS.values()]
    assert len(set(seeds)) == len(seeds)
    copies = {sid: load_fixtures()[i] for i, sid in enumerate(FIXTURE_SPECS)}
    a = copies["stationary_a"].load()[0].samples
    b = copies["stationary_b"].load()[0].samples
    assert not np.array_equal(a[:100], b[:100])
