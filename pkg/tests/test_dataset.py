import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coughlab.audio import load_wav
from coughlab.dataset import (
    ManifestEntry,
    load_manifest,
    load_split,
    save_split,
    split,
    subjects_by_label,
    synth_corpus,
    synth_cough,
    write_manifest,
)
from coughlab.errors import ConfigError, ManifestError, StratificationError


def _write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _entries(counts, coughs=2):
    out = []
    for label, n in counts.items():
        for s in range(n):
            for c in range(coughs):
                out.append(ManifestEntry(f"{label}{s}_{c}.wav", f"{label}{s}", label))
    return out


# ---------------------------------------------------------------- manifest

def test_load_three_rows(tmp_path):
    p = _write(tmp_path, "clip_path,subject_id,label,stage\n"
                         "a.wav,s1,healthy,\nb.wav,s1,healthy,none\nc.wav,s2,asthma,stage1\n")
    entries = load_manifest(p)
    assert [e.label for e in entries] == ["healthy", "healthy", "asthma"]
    assert entries[0].stage == "none"
    assert entries[2].path == tmp_path / "c.wav"


def test_unknown_label_names_line(tmp_path):
    p = _write(tmp_path, "clip_path,subject_id,label,stage\na.wav,s1,healthy,\nb.wav,s2,flu,\n")
    with pytest.raises(ManifestError, match=r":3: .*flu"):
        load_manifest(p)


def test_header_only_and_empty(tmp_path):
    assert load_manifest(_write(tmp_path, "clip_path,subject_id,label,stage\n")) == []
    with pytest.raises(ManifestError):
        load_manifest(_write(tmp_path, "", "empty.csv"))


def test_duplicate_path(tmp_path):
    p = _write(tmp_path, "clip_path,subject_id,label,stage\na.wav,s1,healthy,\na.wav,s2,lrti,\n")
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(p)


def test_missing_column(tmp_path):
    with pytest.raises(ManifestError, match="label"):
        load_manifest(_write(tmp_path, "clip_path,subject_id,stage\na.wav,s1,\n"))


def test_bad_stage_and_ragged_row(tmp_path):
    with pytest.raises(ManifestError):
        load_manifest(_write(tmp_path, "clip_path,subject_id,label,stage\na.wav,s1,healthy,stage9\n"))
    with pytest.raises(ManifestError):
        load_manifest(_write(tmp_path, "clip_path,subject_id,label,stage\na.wav,s1\n", "r.csv"))


def test_manifest_round_trip_with_extra_columns(tmp_path):
    p = _write(tmp_path, "clip_path,subject_id,label,stage,site\na.wav,s1,urti,stage2,north\n")
    entries = load_manifest(p)
    assert entries[0].extra == (("site", "north"),)
    write_manifest(entries, tmp_path / "out.csv")
    again = load_manifest(tmp_path / "out.csv")
    assert again == entries
    assert again[0].extra == entries[0].extra


def test_subject_with_two_labels():
    entries = [ManifestEntry("a.wav", "s", "healthy"), ManifestEntry("b.wav", "s", "lrti")]
    with pytest.raises(StratificationError):
        subjects_by_label(entries)


# ---------------------------------------------------------------- split

def test_ten_subjects_seven_three():
    plan = split(_entries({"healthy": 10}), 0.7, seed=0)
    assert (len(plan.train_subjects), len(plan.test_subjects)) == (7, 3)


def test_disjoint_over_seeds():
    entries = _entries({"healthy": 9, "asthma": 6, "lrti": 4})
    everyone = {e.subject_id for e in entries}
    for seed in range(100):
        plan = split(entries, 0.7, seed)
        assert not plan.train_subjects & plan.test_subjects
        assert plan.train_subjects | plan.test_subjects == everyone


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.sampled_from(["healthy", "asthma", "urti", "lrti"]), st.integers(2, 15), min_size=1),
       st.floats(0.05, 0.95), st.integers(0, 10 ** 6))
def test_stratified_proportions(counts, frac, seed):
    entries = _entries(counts, coughs=1)
    plan = split(entries, frac, seed)
    by_label = subjects_by_label(entries)
    for label, subjects in by_label.items():
        n_train = sum(s in plan.train_subjects for s in subjects)
        assert abs(n_train - frac * len(subjects)) <= 1.0 + 1e-9
        assert 1 <= n_train <= len(subjects) - 1


def test_split_deterministic_and_seed_sensitive():
    entries = _entries({"healthy": 12, "urti": 12})
    assert split(entries, 0.7, 4) == split(entries, 0.7, 4)
    assert any(split(entries, 0.7, 4).train_subjects != split(entries, 0.7, s).train_subjects for s in range(5, 10))


def test_split_unstratified():
    plan = split(_entries({"healthy": 5, "lrti": 5}), 0.5, 1, stratify_by_label=False)
    assert len(plan.train_subjects) == 5


def test_single_subject_class_rejected():
    with pytest.raises(StratificationError):
        split(_entries({"healthy": 4, "asthma": 1}))
    with pytest.raises(ConfigError):
        split(_entries({"healthy": 4}), 1.0)


def test_split_file_round_trip(tmp_path):
    plan = split(_entries({"healthy": 4, "lrti": 4}), 0.5, 2)
    save_split(plan, tmp_path / "s.json", task="healthy-vs-lrti")
    back, info = load_split(tmp_path / "s.json")
    assert back == plan
    assert info["task"] == "healthy-vs-lrti"
    entries = _entries({"healthy": 4, "lrti": 4})
    assert {e.subject_id for e in back.side(entries, "test")} == plan.test_subjects


# ---------------------------------------------------------------- synthetic corpus

def _digest(directory):
    h = hashlib.sha256()
    for p in sorted(directory.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(directory).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_synth_counts_and_determinism(tmp_path):
    a = synth_corpus(tmp_path / "a", {"healthy": 5, "lrti": 5}, seed=11)
    synth_corpus(tmp_path / "b", {"healthy": 5, "lrti": 5}, seed=11)
    assert 100 <= len(a) <= 120
    assert len(list((tmp_path / "a").rglob("*.wav"))) == len(a)
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    loaded = load_manifest(tmp_path / "a" / "manifest.csv")
    assert loaded == a
    assert {e.label for e in loaded} == {"healthy", "lrti"}
    clip = load_wav(loaded[0].path)
    assert clip.sample_rate == 44100
    assert 0.25 <= len(clip) / 44100 <= 0.55


def test_synth_classes_are_spectrally_distinct():
    rng = np.random.default_rng(0)
    centroids = {}
    for label in ("healthy", "lrti"):
        vals = []
        for _ in range(5):
            x = synth_cough(label, rng)
            spec = np.abs(np.fft.rfft(x)) ** 2
            f = np.fft.rfftfreq(x.size, 1 / 44100)
            vals.append((f * spec).sum() / spec.sum())
        centroids[label] = np.mean(vals)
    assert centroids["lrti"] > 2 * centroids["healthy"]


def test_synth_unknown_label():
    with pytest.raises(ConfigError):
        synth_cough("flu", np.random.default_rng(0))
