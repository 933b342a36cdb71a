"""Partial-label dataset model, synthetic generation, file I/O, splitting.

A dataset is a real feature matrix plus one candidate label set per
instance; an instance whose set has exactly one label is *clean* and that
label is its ground truth.  Synthetic data additionally carries the hidden
truth for evaluation only -- training code must work from a truth-stripped
view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np


class PllFormatError(ValueError):
    """Raised on malformed PLL text input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class CandidateSet:
    """Candidate labels of one instance as a bitmask over classes 0..m-1."""

    mask: int
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("class count must be >= 1")
        if self.mask <= 0 or self.mask >= (1 << self.m):
            raise ValueError("candidate mask must select >= 1 class below m")

    @classmethod
    def from_labels(cls, labels: Iterable[int], m: int) -> "CandidateSet":
        mask = 0
        for lab in labels:
            if not 0 <= lab < m:
                raise ValueError(f"label {lab} outside [0, {m})")
            mask |= 1 << lab
        return cls(mask=mask, m=m)

    def cardinality(self) -> int:
        return self.mask.bit_count()

    def is_clean(self) -> bool:
        return self.cardinality() == 1

    def sole(self) -> int:
        if not self.is_clean():
            raise ValueError("sole() is only defined for clean samples")
        return self.mask.bit_length() - 1

    def labels(self) -> tuple[int, ...]:
        cached = self.__dict__.get("_labels")
        if cached is None:
            cached = tuple(j for j in range(self.m) if self.mask >> j & 1)
            object.__setattr__(self, "_labels", cached)
        return cached

    def __contains__(self, label: int) -> bool:
        return 0 <= label < self.m and bool(self.mask >> label & 1)


@dataclass(frozen=True)
class PartialDataset:
    """Feature matrix, per-instance candidate sets, optional hidden truth.

    hidden_truth exists only for evaluation: for data from the synthetic
    generator it is always a member of the candidate set.  Instances are
    immutable after construction; the feature array is marked read-only.
    """

    features: np.ndarray
    candidates: tuple[CandidateSet, ...]
    m: int
    hidden_truth: np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        feats = feats.copy()
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if len(self.candidates) != feats.shape[0]:
            raise ValueError("one candidate set per feature row required")
        for cs in self.candidates:
            if cs.m != self.m:
                raise ValueError("candidate set class count differs from dataset")
        if self.hidden_truth is not None:
            truth = np.asarray(self.hidden_truth, dtype=np.int64).copy()
            if truth.shape != (feats.shape[0],):
                raise ValueError("hidden_truth must have one label per instance")
            if truth.size and (truth.min() < 0 or truth.max() >= self.m):
                raise ValueError("hidden_truth labels outside [0, m)")
            truth.flags.writeable = False
            object.__setattr__(self, "hidden_truth", truth)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def strip_truth(self) -> "PartialDataset":
        """View without hidden truth; what the trainer is allowed to see."""
        if self.hidden_truth is None:
            return self
        return replace(self, hidden_truth=None)

    def subset(self, indices) -> "PartialDataset":
        idx = np.asarray(indices, dtype=np.int64)
        truth = None if self.hidden_truth is None else self.hidden_truth[idx]
        return PartialDataset(
            features=self.features[idx],
            candidates=tuple(self.candidates[int(i)] for i in idx),
            m=self.m,
            hidden_truth=truth,
        )


@dataclass(frozen=True)
class DatasetStats:
    n: int
    d: int
    m: int
    avg_candidates: float
    clean_rate: float


def generate_synthetic(
    true_labels, m: int, q: float, seed: int, mode: str = "binomial"
) -> tuple[CandidateSet, ...]:
    """Candidate sets around known true labels.

    ``binomial`` (the default) includes each of the m-1 false labels
    independently with probability q, so set sizes follow 1 + Binomial(m-1, q).
    ``uniform-size`` instead draws the set size uniformly from 1..m and fills
    it with false labels sampled without replacement (q is ignored); it
    exists for sensitivity studies against the binomial assumption.
    The true label is always a member.
    """
    if m < 2:
        raise ValueError("class count must be >= 2")
    if not 0.0 <= q <= 1.0:
        raise ValueError("flip probability q must lie in [0, 1]")
    if mode not in ("binomial", "uniform-size"):
        raise ValueError(f"unknown generation mode {mode!r}")
    labels = np.asarray(true_labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= m):
        raise ValueError("true labels outside [0, m)")
    rng = np.random.default_rng(seed)
    n = len(labels)

    out = []
    if mode == "binomial":
        flips = rng.random((n, m)) < q
        for i, t in enumerate(labels):
            mask = 1 << int(t)
            row = flips[i]
            for j in range(m):
                if j != t and row[j]:
                    mask |= 1 << j
            out.append(CandidateSet(mask=mask, m=m))
    else:
        sizes = rng.integers(1, m + 1, size=n)
        for i, t in enumerate(labels):
            false = [j for j in range(m) if j != int(t)]
            extra = rng.permutation(len(false))[: sizes[i] - 1]
            mask = 1 << int(t)
            for e in extra:
                mask |= 1 << false[int(e)]
            out.append(CandidateSet(mask=mask, m=m))
    return tuple(out)


def compute_stats(dataset: PartialDataset) -> DatasetStats:
    """Exact size/candidate statistics of a dataset."""
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    cards = [cs.cardinality() for cs in dataset.candidates]
    clean = sum(1 for c in cards if c == 1)
    return DatasetStats(
        n=dataset.n,
        d=dataset.d,
        m=dataset.m,
        avg_candidates=sum(cards) / dataset.n,
        clean_rate=clean / dataset.n,
    )


def split(
    dataset: PartialDataset, test_fraction: float, seed: int
) -> tuple[PartialDataset, PartialDataset]:
    """Disjoint shuffled train/test partition; the test side takes the ceil."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    n = dataset.n
    n_test = math.ceil(n * test_fraction)
    if n_test >= n:
        raise ValueError("test_fraction leaves no training data")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(perm[n_test:]), dataset.subset(perm[:n_test])


def gaussian_clusters(
    n: int, classes: int, seed: int, spread: float = 1.0, radius: float = 5.0
) -> tuple[np.ndarray, np.ndarray]:
    """Separable 2-D benchmark clusters: class centers on a circle.

    Returns (features, labels); labels are drawn uniformly, features are
    isotropic Gaussians of the given spread around each class center.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    if n < 1:
        raise ValueError("need at least 1 instance")
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(classes) / classes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    labels = rng.integers(0, classes, size=n)
    features = centers[labels] + spread * rng.standard_normal((n, 2))
    return features, labels


# ---------------------------------------------------------------------------
# PLL text format
#
#   #pll n=<n> d=<d> m=<m>
#   <truth|?>;<c1,c2,...,ck>;<f1 f2 ... fd>
#
# Candidates are strictly increasing class indices; features are decimal
# text produced by repr(), so write -> read is an identity on float64.
# ---------------------------------------------------------------------------


def write_pll_file(dataset: PartialDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#pll n={dataset.n} d={dataset.d} m={dataset.m}\n")
        truth = dataset.hidden_truth
        for i in range(dataset.n):
            t = "?" if truth is None else str(int(truth[i]))
            cands = ",".join(str(j) for j in dataset.candidates[i].labels())
            feats = " ".join(repr(float(v)) for v in dataset.features[i])
            fh.write(f"{t};{cands};{feats}\n")


def read_pll_file(path) -> PartialDataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        n, d, m = _parse_header(header)
        features = np.empty((n, d))
        candidates: list[CandidateSet] = []
        truths: list[int | None] = []
        for i in range(n):
            line = fh.readline()
            lineno = i + 2
            if line == "":
                raise PllFormatError(f"expected {n} instances, file ends after {i}", lineno)
            truth, cs, feats = _parse_line(line.rstrip("\n"), d, m, lineno)
            features[i] = feats
            candidates.append(cs)
            truths.append(truth)
        if fh.readline() != "":
            raise PllFormatError("trailing content after declared instances", n + 2)

    have_truth = [t is not None for t in truths]
    if any(have_truth) and not all(have_truth):
        raise PllFormatError("mix of '?' and concrete truth labels")
    hidden = np.array(truths, dtype=np.int64) if n and all(have_truth) else None
    return PartialDataset(features=features, candidates=tuple(candidates), m=m, hidden_truth=hidden)


def _parse_header(header: str) -> tuple[int, int, int]:
    parts = header.split()
    if len(parts) != 4 or parts[0] != "#pll":
        raise PllFormatError("header must be '#pll n=<n> d=<d> m=<m>'", 1)
    vals = {}
    for part in parts[1:]:
        key, _, val = part.partition("=")
        if key not in ("n", "d", "m") or not val.isdigit():
            raise PllFormatError(f"bad header field {part!r}", 1)
        vals[key] = int(val)
    if set(vals) != {"n", "d", "m"} or vals["d"] < 1 or vals["m"] < 1:
        raise PllFormatError("header must define n, d >= 1, and m >= 1", 1)
    return vals["n"], vals["d"], vals["m"]


def _parse_line(line: str, d: int, m: int, lineno: int):
    parts = line.split(";")
    if len(parts) != 3:
        raise PllFormatError("expected '<truth|?>;<candidates>;<features>'", lineno)
    truth_s, cand_s, feat_s = parts

    if truth_s == "?":
        truth = None
    else:
        try:
            truth = int(truth_s)
        except ValueError:
            raise PllFormatError(f"bad truth field {truth_s!r}", lineno) from None
        if not 0 <= truth < m:
            raise PllFormatError(f"truth label {truth} outside [0, {m})", lineno)

    if cand_s == "":
        raise PllFormatError("empty candidate list", lineno)
    try:
        labs = [int(tok) for tok in cand_s.split(",")]
    except ValueError:
        raise PllFormatError(f"bad candidate list {cand_s!r}", lineno) from None
    for lab in labs:
        if not 0 <= lab < m:
            raise PllFormatError(f"candidate index {lab} outside [0, {m})", lineno)
    if any(b <= a for a, b in zip(labs, labs[1:])):
        raise PllFormatError("candidates must be strictly increasing", lineno)
    cs = CandidateSet.from_labels(labs, m)
    if truth is not None and truth not in cs:
        raise PllFormatError(f"truth label {truth} not among candidates", lineno)

    toks = feat_s.split()
    if len(toks) != d:
        raise PllFormatError(f"expected {d} features, got {len(toks)}", lineno)
    try:
        feats = [float(tok) for tok in toks]
    except ValueError:
        raise PllFormatError("bad feature value", lineno) from None
    return truth, cs, feats
