"""Ratio-test matching, match-count similarity and rank-1 evaluation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Hashable, Mapping, NamedTuple, Sequence

import numpy as np

from .suld import SuldDescriptor


@dataclass(frozen=True)
class MatcherConfig:
    ratio_threshold: float = 0.8
    # keep only matches that are also the gallery point's best probe match
    mutual: bool = False

    def __post_init__(self):
        if not 0.0 < self.ratio_threshold < 1.0:
            raise ValueError("ratio_threshold must lie in (0, 1)")


class Match(NamedTuple):
    probe_index: int
    gallery_index: int
    best_dist: float
    second_dist: float


def as_matrix(descs) -> np.ndarray:
    """(n, d) float64 matrix from descriptors or an array."""
    if isinstance(descs, np.ndarray):
        return descs.astype(np.float64, copy=False).reshape(len(descs), -1) if descs.size else np.zeros((0, 0))
    descs = list(descs)
    if not descs:
        return np.zeros((0, 0))
    if isinstance(descs[0], SuldDescriptor):
        return np.stack([d.values for d in descs]).astype(np.float64)
    return np.asarray(descs, dtype=np.float64)


def _distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # explicit differences; the expanded dot-product form loses the exact zeros
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))


def match_descriptors(probe, gallery, cfg: MatcherConfig | None = None) -> list[Match]:
    """One-way probe-to-gallery matches passing ``best / second < ratio``.

    A probe point with both neighbour distances zero (duplicated gallery
    descriptors) is not matched, nor is any probe point when the gallery holds
    fewer than two descriptors. Several probe points may match the same
    gallery point unless ``cfg.mutual`` is set.
    """
    cfg = cfg or MatcherConfig()
    p = as_matrix(probe)
    g = as_matrix(gallery)
    if len(p) == 0 or len(g) < 2:
        return []
    dist = _distances(p, g)
    order = np.argsort(dist, axis=1, kind="stable")
    rows = np.arange(len(p))
    best_idx = order[:, 0]
    best = dist[rows, best_idx]
    second = dist[rows, order[:, 1]]
    ok = second > 0
    ok[ok] = best[ok] / second[ok] < cfg.ratio_threshold
    if cfg.mutual:
        back = np.argmin(dist, axis=0)
        ok &= back[best_idx] == rows
    return [
        Match(int(i), int(best_idx[i]), float(best[i]), float(second[i]))
        for i in np.flatnonzero(ok)
    ]


def similarity(probe, gallery, cfg: MatcherConfig | None = None) -> int:
    """Number of ratio-test matches from ``probe`` into ``gallery``."""
    return len(match_descriptors(probe, gallery, cfg))


class RankedEntry(NamedTuple):
    identity: Hashable
    similarity: int
    mean_distance: float
    gallery_index: int


class RecognitionResult(NamedTuple):
    ranked: list[RankedEntry]

    @property
    def rank1(self) -> Hashable:
        return self.ranked[0].identity

    @property
    def zero_confidence(self) -> bool:
        """True when no gallery entry produced a single match."""
        return self.ranked[0].similarity == 0


def recognize(probe, gallery: Sequence[tuple[Hashable, object]], cfg: MatcherConfig | None = None) -> RecognitionResult:
    """Rank gallery entries by match count.

    Equal counts are ordered by smaller mean matched distance, then gallery
    order.
    """
    if len(gallery) == 0:
        raise ValueError("gallery is empty")
    p = as_matrix(probe)
    entries = []
    for i, (identity, descs) in enumerate(gallery):
        matches = match_descriptors(p, descs, cfg)
        mean = float(np.mean([m.best_dist for m in matches])) if matches else float("inf")
        entries.append(RankedEntry(identity, len(matches), mean, i))
    entries.sort(key=lambda e: (-e.similarity, e.mean_distance, e.gallery_index))
    return RecognitionResult(entries)


@dataclass(frozen=True)
class Protocol:
    name: str
    train_scans: frozenset[int] = frozenset()
    test_scans: frozenset[int] = frozenset()
    subject_count: int | None = None
    # "split": gallery/probe scan sets; "loo": leave-one-out; "sanity": probe = gallery
    mode: str = "split"

    def __post_init__(self):
        if self.mode not in ("split", "loo", "sanity"):
            raise ValueError(f"unknown protocol mode {self.mode!r}")
        if self.mode == "split":
            if not self.train_scans or not self.test_scans:
                raise ValueError("split protocols need train and test scans")
            if self.train_scans & self.test_scans:
                raise ValueError("train and test scan sets must be disjoint")
        if self.subject_count is not None and self.subject_count < 1:
            raise ValueError("subject_count must be positive")

    def limited(self, subject_count: int | None) -> Protocol:
        return Protocol(self.name, self.train_scans, self.test_scans, subject_count, self.mode)


_FRONTAL = frozenset({1, 2, 3, 4})
PROTOCOLS = {
    "T1": Protocol("T1", frozenset({1, 2, 3}), frozenset({4})),
    "T2": Protocol("T2", _FRONTAL, frozenset({11})),
    "T3": Protocol("T3", _FRONTAL, frozenset({12})),
    "T4": Protocol("T4", _FRONTAL, frozenset({15, 16})),
    "T5": Protocol("T5", _FRONTAL, frozenset({7, 8})),
    "LOO": Protocol("LOO", mode="loo"),
    "SANITY": Protocol("SANITY", mode="sanity"),
}


def get_protocol(name: str) -> Protocol:
    try:
        return PROTOCOLS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown protocol {name!r}; choose from {', '.join(PROTOCOLS)}") from None


@dataclass(frozen=True)
class FaceFeatures:
    descriptors: np.ndarray  # (n, d)
    detected: int
    skipped: int = 0


@dataclass(frozen=True)
class EvaluationReport:
    protocol: str
    subjects: int
    probes: int
    correct: int
    accuracy: float  # percent
    mean_points: float
    skipped: int

    def to_text(self) -> str:
        return (
            f"{self.protocol}\tsubjects={self.subjects}\tprobes={self.probes}\tcorrect={self.correct}"
            f"\taccuracy={self.accuracy:.2f}\tmean_points={self.mean_points:.2f}\tskipped={self.skipped}"
        )

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["accuracy"] = round(self.accuracy, 2)
        rec["mean_points"] = round(self.mean_points, 2)
        return rec


def reports_to_json(reports: Sequence[EvaluationReport]) -> str:
    return json.dumps([r.to_record() for r in reports], indent=2, sort_keys=True) + "\n"


def evaluate(
    features: Mapping[tuple[str, int], FaceFeatures],
    protocol: Protocol,
    cfg: MatcherConfig | None = None,
) -> EvaluationReport:
    """Rank-1 accuracy of ``protocol`` over precomputed per-scan features.

    ``features`` is keyed by ``(subject_id, scan_id)``; subjects are taken in
    first-appearance order and truncated to ``protocol.subject_count``.
    """
    subjects = list(dict.fromkeys(s for s, _ in features))
    if protocol.subject_count is not None:
        if protocol.subject_count > len(subjects):
            raise ValueError(f"protocol wants {protocol.subject_count} subjects, only {len(subjects)} available")
        subjects = subjects[: protocol.subject_count]
    chosen = set(subjects)
    keys = [k for k in features if k[0] in chosen]

    if protocol.mode == "split":
        for s in subjects:
            for scan in sorted(protocol.train_scans | protocol.test_scans):
                if (s, scan) not in features:
                    raise KeyError(f"subject {s!r} lacks scan {scan} required by {protocol.name}")
        gallery_keys = [k for k in keys if k[1] in protocol.train_scans]
        probe_keys = [k for k in keys if k[1] in protocol.test_scans]
    else:
        gallery_keys = list(keys)
        probe_keys = list(keys)

    correct = 0
    for pk in probe_keys:
        if protocol.mode == "loo":
            gk = [k for k in gallery_keys if k != pk]
        else:
            gk = gallery_keys
        gallery = [(k[0], features[k].descriptors) for k in gk]
        result = recognize(features[pk].descriptors, gallery, cfg)
        correct += result.rank1 == pk[0]

    used = set(gallery_keys) | set(probe_keys)
    used_sorted = [k for k in keys if k in used]
    mean_points = float(np.mean([features[k].detected for k in used_sorted])) if used_sorted else 0.0
    n = len(probe_keys)
    return EvaluationReport(
        protocol=protocol.name,
        subjects=len(subjects),
        probes=n,
        correct=int(correct),
        accuracy=100.0 * correct / n if n else 0.0,
        mean_points=mean_points,
        skipped=int(sum(features[k].skipped for k in used_sorted)),
    )
