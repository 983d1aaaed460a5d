"""Committed synthetic fixtures and the optional open-dataset fetcher.

Fixtures are 25 s synthetic segments with exact annotations, one pair per
stress class (stationary, heart-rate ramp, amplitude step, dominant T wave,
noise bursts). Each carries an exercise-intensity label so scores can be
stratified by class. The manifest lists ``id,class,path,checksum`` with
SHA-256 checksums; paths are relative to the manifest.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
import shutil
import tempfile
import urllib.parse
import urllib.request
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .error_detector import RrThresholds, build_thresholds, load_thresholds, rr_ratios, save_thresholds
from .errors import FormatError, IntegrityError
from .signal_io import SynthesisSpec, load_ecg, load_peaks, save_ecg, save_peaks, synthesize_ecg

INTENSITY_CLASSES = ("before_VT2", "after_VT2", "before_VO2max", "VO2max", "recovery")
FIXTURE_KINDS = ("stationary", "hr_ramp", "amp_step", "dominant_t", "noisy_burst")
MANIFEST_NAME = "manifest.csv"
THRESHOLDS_NAME = "thresholds.txt"
SEGMENT_S = 25.0
DECIMALS = 3

#: Per-subject thresholds shipped with the fixtures (typical of a single
#: leave-one-out fold on real exercise data).
DEFAULT_THRESHOLDS = RrThresholds(0.64, 1.47, 0, None)

FIXTURE_SPECS = {
    "stationary_a": ("before_VT2", SynthesisSpec(SEGMENT_S, ((0, 95),), noise_sd=8, seed=11)),
    "stationary_b": ("before_VT2", SynthesisSpec(SEGMENT_S, ((0, 118),), noise_sd=8, seed=12)),
    "hr_ramp_a": ("after_VT2", SynthesisSpec(SEGMENT_S, ((0, 120), (25, 172)), noise_sd=10, seed=21)),
    "hr_ramp_b": ("recovery", SynthesisSpec(SEGMENT_S, ((0, 168), (25, 112)), noise_sd=10, seed=22)),
    "amp_step_a": (
        "before_VO2max",
        SynthesisSpec(SEGMENT_S, ((0, 150),), amplitude_profile=((0, 1.0), (12, 1.0), (12, 0.4)), noise_sd=8,
                      seed=31),
    ),
    "amp_step_b": (
        "before_VO2max",
        SynthesisSpec(SEGMENT_S, ((0, 158),),
                      amplitude_profile=((0, 1.0), (8, 1.0), (8, 0.35), (16, 0.35), (16, 1.0)), noise_sd=8,
                      seed=32),
    ),
    "dominant_t_a": ("VO2max", SynthesisSpec(SEGMENT_S, ((0, 165),), t_wave_gain=1.5, noise_sd=10, seed=41)),
    "dominant_t_b": (
        "VO2max",
        SynthesisSpec(SEGMENT_S, ((0, 176),), t_wave_gain=2.0, amplitude_profile=((0, 1.0), (25, 0.6)),
                      noise_sd=10, seed=42),
    ),
    "noisy_burst_a": (
        "recovery",
        SynthesisSpec(SEGMENT_S, ((0, 138),), noise_sd=10, noise_bursts=((9.0, 10.5, 250.0),), seed=51),
    ),
    "noisy_burst_b": (
        "after_VT2",
        SynthesisSpec(SEGMENT_S, ((0, 128),), noise_sd=10,
                      noise_bursts=((6.0, 7.0, 300.0), (17.0, 18.0, 300.0)), seed=52),
    ),
}


@dataclass(frozen=True)
class SegmentManifest:
    """One manifest row; `path` is resolved against the manifest directory."""

    id: str
    segment_class: str
    path: Path
    checksum: str

    @property
    def annotation_path(self):
        return self.path.with_suffix(".peaks")

    def verify(self):
        """Raise :class:`IntegrityError` unless the file matches its checksum."""
        verify_file(self.path, self.checksum)
        return self

    def load(self, verify=True):
        """``(EcgRecord, PeakList)`` for this segment."""
        if verify:
            self.verify()
        rec = load_ecg(self.path)
        ann, _ = load_peaks(self.annotation_path)
        return rec, ann


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def verify_file(path, checksum):
    path = Path(path)
    if not path.exists():
        raise IntegrityError(f"{path}: file missing")
    got = sha256_file(path)
    if got != checksum:
        raise IntegrityError(f"{path}: checksum mismatch (expected {checksum[:12]}..., got {got[:12]}...)")


def fixtures_dir():
    """Directory of the fixtures shipped inside the package."""
    return Path(str(resources.files("adaptive_rpeak") / "data" / "fixtures"))


def write_manifest(entries, path):
    path = Path(path)
    rows = ["id,class,path,checksum"]
    for e in entries:
        rel = os.path.relpath(e.path, path.parent)
        rows.append(f"{e.id},{e.segment_class},{Path(rel).as_posix()},{e.checksum}")
    path.write_text("\n".join(rows) + "\n")
    return path


def read_manifest(path):
    """Parse a manifest; a header row ``id,class,path,checksum`` is optional."""
    path = Path(path)
    entries = []
    for n, row in enumerate(csv.reader(io.StringIO(path.read_text())), start=1):
        if not row or row[0].startswith("#"):
            continue
        if n == 1 and row[0] == "id":
            continue
        if len(row) != 4:
            raise FormatError(f"{path}:{n}: expected 'id,class,path,checksum'")
        sid, cls, rel, checksum = (c.strip() for c in row)
        entries.append(SegmentManifest(sid, cls, (path.parent / rel).resolve(), checksum))
    return entries


def prepare_fixtures(dest=None, ids=None):
    """Render the synthetic fixtures, their annotations and the manifest.

    Deterministic: rerunning produces byte-identical files. Returns the
    manifest entries.
    """
    dest = Path(dest) if dest is not None else fixtures_dir()
    dest.mkdir(parents=True, exist_ok=True)
    entries = []
    for sid, (cls, spec) in FIXTURE_SPECS.items():
        if ids is not None and sid not in ids:
            continue
        rec, ann = synthesize_ecg(spec)
        path = dest / f"{sid}.csv"
        save_ecg(rec, path, decimals=DECIMALS)
        save_peaks(ann, path.with_suffix(".peaks"), fs=rec.fs)
        entries.append(SegmentManifest(sid, cls, path, sha256_file(path)))
    write_manifest(entries, dest / MANIFEST_NAME)
    save_thresholds(DEFAULT_THRESHOLDS, dest / THRESHOLDS_NAME)
    return entries


def load_fixtures(verify=True, directory=None):
    """Manifest entries of the committed fixtures, checksums verified."""
    directory = Path(directory) if directory is not None else fixtures_dir()
    entries = read_manifest(directory / MANIFEST_NAME)
    if verify:
        for e in entries:
            e.verify()
    return entries


def fixture_thresholds(directory=None):
    directory = Path(directory) if directory is not None else fixtures_dir()
    return load_thresholds(directory / THRESHOLDS_NAME)


def loo_thresholds(entries, exclude):
    """Thresholds from the annotated RR ratios of every segment but `exclude`."""
    pools = {e.id: rr_ratios(load_peaks(e.annotation_path)[0]) for e in entries}
    return build_thresholds(pools, exclude=exclude)


def fetch_open_dataset(url, dest, timeout=60.0):
    """Download a remote corpus described by a manifest and verify it.

    `url` points at a manifest in the ``id,class,path,checksum`` format;
    every listed file (and its ``.peaks`` annotation, when present) is
    fetched relative to it. Files land in `dest` only after their checksum
    verifies.

    Raises
    ------
    IntegrityError
        A downloaded file does not match its manifest checksum.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    manifest_path = dest / MANIFEST_NAME
    _download(url, manifest_path, timeout)
    base = url.rsplit("/", 1)[0] + "/"
    out = []
    for e in read_manifest(manifest_path):
        rel = Path(os.path.relpath(e.path, dest.resolve())).as_posix()
        e.path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.TemporaryDirectory(dir=dest) as tmp:
            staged = Path(tmp) / e.path.name
            _download(urllib.parse.urljoin(base, rel), staged, timeout)
            verify_file(staged, e.checksum)
            shutil.move(str(staged), e.path)
        try:
            _download(urllib.parse.urljoin(base, Path(rel).with_suffix(".peaks").as_posix()),
                      e.annotation_path, timeout)
        except OSError:
            pass
        out.append(e)
    return out


def _download(url, path, timeout):
    if urllib.parse.urlparse(url).scheme in ("", "file"):
        src = urllib.parse.urlparse(url).path if url.startswith("file:") else url
        shutil.copyfile(src, path)
        return
    with urllib.request.urlopen(url, timeout=timeout) as resp, open(path, "wb") as fh:
        shutil.copyfileobj(resp, fh)
