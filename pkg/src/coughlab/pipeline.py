"""Glue between manifests, the DSP chain and the classifier.

A task fixes the class list and how manifest labels map onto it.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from .audio import ConditioningConfig, condition, load_wav
from .dataset import LABELS, PATHOLOGIES
from .errors import CoughLabError, ConfigError
from .features import FeatureSequence, FrameConfig, MfccConfig, extract

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Task:
    name: str
    classes: tuple
    mapping: dict  # manifest label -> class index; labels absent are dropped

    def relabel(self, entries):
        """Pairs of (entry, class index), dropping entries outside the task."""
        return [(e, self.mapping[e.label]) for e in entries if e.label in self.mapping]

    def check(self, entries) -> None:
        present = {self.mapping[e.label] for e in entries if e.label in self.mapping}
        missing = [c for i, c in enumerate(self.classes) if i not in present]
        if missing:
            raise ConfigError(f"task {self.name}: no manifest entries for class(es) {', '.join(missing)}")


def _pairwise(p):
    return Task(f"healthy-vs-{p}", ("healthy", p), {"healthy": 0, p: 1})


TASKS = {
    "healthy-vs-pathology": Task(
        "healthy-vs-pathology", ("healthy", "pathological"),
        {"healthy": 0, **{p: 1 for p in PATHOLOGIES}},
    ),
    **{f"healthy-vs-{p}": _pairwise(p) for p in PATHOLOGIES},
    "4class": Task("4class", LABELS, {lab: i for i, lab in enumerate(LABELS)}),
}
TASK_ALIASES = {"2class": "healthy-vs-pathology"}


def get_task(name) -> Task:
    if isinstance(name, Task):
        return name
    if name is None:
        raise ConfigError("no task given")
    name = TASK_ALIASES.get(name, name)
    try:
        return TASKS[name]
    except KeyError:
        raise ConfigError(f"unknown task {name!r}; choose from {', '.join(TASKS)}") from None


def check_task_matches(checkpoint, task: Task) -> None:
    n = checkpoint.config.num_classes
    if n != len(task.classes):
        raise ConfigError(f"checkpoint has {n} classes but task {task.name} needs {len(task.classes)}")
    trained = checkpoint.meta.get("task")
    if trained and get_task(trained).classes != task.classes:
        raise ConfigError(f"checkpoint was trained for task {trained}, not {task.name}")


@dataclass(frozen=True)
class PipelineConfigs:
    conditioning: ConditioningConfig = field(default_factory=ConditioningConfig)
    frame: FrameConfig = field(default_factory=FrameConfig)
    mfcc: MfccConfig = field(default_factory=MfccConfig)

    def to_meta(self) -> dict:
        return {"conditioning": asdict(self.conditioning), "frame": asdict(self.frame), "mfcc": asdict(self.mfcc)}

    @classmethod
    def from_meta(cls, meta: dict) -> "PipelineConfigs":
        return cls(
            ConditioningConfig(**meta.get("conditioning", {})),
            FrameConfig(**meta.get("frame", {})),
            MfccConfig(**meta.get("mfcc", {})),
        )


def featurize_path(path, cfgs: PipelineConfigs, source_id: str | None = None) -> FeatureSequence:
    clip = condition(load_wav(path), cfgs.conditioning)
    seq = extract(clip, cfgs.frame, cfgs.mfcc)
    return FeatureSequence(seq.frames, seq.frame_times, source_id or str(path))


def _featurize_one(args):
    path, cfgs, source_id = args
    try:
        return featurize_path(path, cfgs, source_id), None
    except (CoughLabError, OSError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def featurize_entries(entries, cfgs: PipelineConfigs, jobs: int = 1):
    """``(FeatureSequence | None, error | None)`` per entry, in input order."""
    work = [(e.path, cfgs, e.source_id) for e in entries]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_featurize_one, work, chunksize=8))
    else:
        results = [_featurize_one(w) for w in work]
    for (path, _, _), (_, err) in zip(work, results):
        if err:
            log.warning("%s: %s", path, err)
    return results
