"""Dataset manifests, subject-disjoint splitting and a synthetic cough corpus."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import AudioClip, write_wav
from .errors import ConfigError, ManifestError, StratificationError

LABELS = ("healthy", "asthma", "urti", "lrti")
PATHOLOGIES = ("asthma", "urti", "lrti")
STAGES = ("stage1", "stage2", "none")
MANIFEST_COLUMNS = ("clip_path", "subject_id", "label", "stage")


@dataclass(frozen=True)
class ManifestEntry:
    clip_path: str
    subject_id: str
    label: str
    stage: str = "none"
    extra: tuple = field(default=(), compare=False)  # pass-through (column, value) pairs
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    @property
    def path(self) -> Path:
        p = Path(self.clip_path)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def source_id(self) -> str:
        return self.clip_path


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a manifest CSV; relative clip paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ManifestError(f"{path}: empty file (missing header)") from None
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        if missing:
            raise ManifestError(f"{path}:1: missing column(s) {', '.join(missing)}")
        col = {name: header.index(name) for name in MANIFEST_COLUMNS}
        extra_cols = [(i, h) for i, h in enumerate(header) if h not in MANIFEST_COLUMNS]
        entries, seen = [], {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ManifestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            clip, subject, label, stage = (row[col[c]].strip() for c in MANIFEST_COLUMNS)
            if not clip:
                raise ManifestError(f"{path}:{lineno}: empty clip_path")
            if not subject:
                raise ManifestError(f"{path}:{lineno}: empty subject_id")
            if label not in LABELS:
                raise ManifestError(f"{path}:{lineno}: unknown label {label!r} (expected one of {', '.join(LABELS)})")
            stage = stage or "none"
            if stage not in STAGES:
                raise ManifestError(f"{path}:{lineno}: unknown stage {stage!r}")
            if clip in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate clip_path {clip!r} (first on line {seen[clip]})")
            seen[clip] = lineno
            extra = tuple((h, row[i]) for i, h in extra_cols)
            entries.append(ManifestEntry(clip, subject, label, stage, extra, base))
    return entries


def write_manifest(entries, path) -> None:
    extra_names = []
    for e in entries:
        for h, _ in e.extra:
            if h not in extra_names:
                extra_names.append(h)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(MANIFEST_COLUMNS) + extra_names)
        for e in entries:
            ex = dict(e.extra)
            w.writerow([e.clip_path, e.subject_id, e.label, e.stage] + [ex.get(h, "") for h in extra_names])


def subjects_by_label(entries) -> dict[str, list[str]]:
    """Label -> sorted subject ids. A subject must carry a single label."""
    label_of: dict[str, str] = {}
    for e in entries:
        prev = label_of.setdefault(e.subject_id, e.label)
        if prev != e.label:
            raise StratificationError(f"subject {e.subject_id!r} has coughs labelled {prev!r} and {e.label!r}")
    out: dict[str, list[str]] = {}
    for subject, label in label_of.items():
        out.setdefault(label, []).append(subject)
    return {k: sorted(v) for k, v in sorted(out.items())}


@dataclass(frozen=True)
class SplitPlan:
    train_subjects: frozenset
    test_subjects: frozenset
    train_fraction: float
    seed: int

    def side(self, entries, which: str = "test") -> list[ManifestEntry]:
        keep = {"train": self.train_subjects, "test": self.test_subjects}[which]
        return [e for e in entries if e.subject_id in keep]

    def to_dict(self) -> dict:
        return {
            "train_subjects": sorted(self.train_subjects),
            "test_subjects": sorted(self.test_subjects),
            "train_fraction": self.train_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "SplitPlan":
        return cls(frozenset(d["train_subjects"]), frozenset(d["test_subjects"]),
                   float(d["train_fraction"]), int(d["seed"]))


def split(entries, train_fraction: float = 0.7, seed: int = 0, stratify_by_label: bool = True) -> SplitPlan:
    """Assign whole subjects to train or test.

    Within each stratum the sorted subject list is shuffled and the first
    ``floor(n * train_fraction)`` go to train, clamped so both sides get at
    least one subject.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    by_label = subjects_by_label(entries)
    strata = list(by_label.items()) if stratify_by_label else [("all", sorted(s for v in by_label.values() for s in v))]
    rng = np.random.default_rng(seed)
    train, test = set(), set()
    for label, subjects in strata:
        n = len(subjects)
        if n < 2:
            raise StratificationError(f"label {label!r} has {n} subject(s); need at least 2 to split")
        order = rng.permutation(n)
        n_train = min(max(math.floor(n * train_fraction + 1e-9), 1), n - 1)
        train.update(subjects[i] for i in order[:n_train])
        test.update(subjects[i] for i in order[n_train:])
    return SplitPlan(frozenset(train), frozenset(test), train_fraction, seed)


def save_split(plan: SplitPlan, path, **info) -> None:
    with open(path, "w") as fh:
        json.dump({**plan.to_dict(), **info}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_split(path) -> tuple[SplitPlan, dict]:
    with open(path) as fh:
        d = json.load(fh)
    return SplitPlan.from_dict(d), d


# --------------------------------------------------------------------------
# synthetic corpus
# --------------------------------------------------------------------------

SYNTH_RATE = 44100


@dataclass(frozen=True)
class CoughProfile:
    resonances: tuple  # Hz, centre frequencies of two-pole resonators
    bandwidth: float  # Hz
    tilt: float  # one-pole coefficient on the excitation; >0 darkens, <0 brightens
    bursts: int  # sub-bursts per cough


# Fixed test-fixture constants. Resonance bands are disjoint across classes
# and sit below the 4.96 kHz anti-alias cutoff of the analysis rate.
PROFILES = {
    "healthy": CoughProfile((450.0, 850.0), 120.0, 0.6, 1),
    "asthma": CoughProfile((2400.0, 3000.0), 180.0, 0.0, 2),
    "urti": CoughProfile((1300.0, 1700.0), 150.0, 0.3, 1),
    "lrti": CoughProfile((3700.0, 4300.0), 220.0, -0.3, 3),
}


def _resonate(x, freq, bandwidth, fs):
    r = math.exp(-math.pi * bandwidth / fs)
    theta = 2.0 * math.pi * freq / fs
    return lfilter([1.0 - r], [1.0, -2.0 * r * math.cos(theta), r * r], x)


def synth_cough(label: str, rng: np.random.Generator, jitter: float = 1.0, fs: int = SYNTH_RATE) -> np.ndarray:
    """One cough: decaying noise bursts shaped by the class resonators."""
    if label not in PROFILES:
        raise ConfigError(f"no synthetic profile for label {label!r}")
    prof = PROFILES[label]
    n = int(rng.uniform(0.30, 0.50) * fs)
    t = np.arange(n) / fs
    env = np.zeros(n)
    for k in range(prof.bursts):
        onset = 0.02 + k * rng.uniform(0.08, 0.12)
        tau = rng.uniform(0.05, 0.09)
        gain = 0.7 ** k
        dt = t - onset
        attack = np.clip(dt / 0.008, 0.0, 1.0)
        env += gain * attack * np.exp(-np.clip(dt, 0.0, None) / tau) * (dt >= 0)
    excitation = lfilter([1.0], [1.0, -prof.tilt], rng.standard_normal(n))
    voiced = sum(_resonate(excitation, f * jitter * rng.uniform(0.98, 1.02), prof.bandwidth, fs)
                 for f in prof.resonances)
    y = voiced * env
    y /= np.max(np.abs(y))
    y += 10 ** (-35 / 20) * rng.standard_normal(n)  # ambient noise floor
    y += rng.uniform(-0.05, 0.05) + rng.uniform(-0.05, 0.05) * t / t[-1]  # offset and drift
    return 0.8 * y / np.max(np.abs(y))


def synth_corpus(out_dir, counts: dict, coughs_per_subject=(10, 12), seed: int = 0,
                 stage: str = "none") -> list[ManifestEntry]:
    """Write a synthetic corpus (PCM16 mono 44.1 kHz WAVs + ``manifest.csv``).

    ``counts`` maps label -> number of subjects. Each subject gets a
    uniformly drawn number of coughs in ``coughs_per_subject`` (inclusive).
    Each file draws from its own RNG stream keyed by (seed, label, subject,
    cough), so output is reproducible byte for byte.
    """
    lo, hi = coughs_per_subject
    if not 1 <= lo <= hi:
        raise ConfigError("coughs_per_subject must satisfy 1 <= lo <= hi")
    unknown = set(counts) - set(LABELS)
    if unknown:
        raise ConfigError(f"unknown label(s) {sorted(unknown)}")
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for li, label in enumerate(LABELS):
        n_subj = int(counts.get(label, 0))
        if n_subj < 0:
            raise ConfigError(f"negative subject count for {label}")
        for s in range(n_subj):
            subject = f"{label}{s:03d}"
            srng = np.random.default_rng([seed, li, s])
            jitter = srng.uniform(0.96, 1.04)
            n_coughs = int(srng.integers(lo, hi + 1))
            for c in range(n_coughs):
                rng = np.random.default_rng([seed, li, s, c])
                clip = AudioClip(synth_cough(label, rng, jitter), SYNTH_RATE)
                rel = f"wav/{subject}_{c:02d}.wav"
                write_wav(out_dir / rel, clip)
                entries.append(ManifestEntry(rel, subject, label, stage, (), out_dir))
    write_manifest(entries, out_dir / "manifest.csv")
    return entries
