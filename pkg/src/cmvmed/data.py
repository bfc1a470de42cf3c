"""Multi-view datasets: file ingestion, stratified splits, synthetic benchmarks."""

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InputError

UNKNOWN = 0
_LABEL_TOKENS = {"+1": 1, "1": 1, "-1": -1, "?": UNKNOWN}


@dataclass(frozen=True, eq=False)
class MultiViewDataset:
    """``V`` feature matrices over shared rows plus a label vector.

    ``labels`` holds -1/+1 for known labels and 0 for unknown.  ``L``, ``U``
    and ``test`` are disjoint index arrays; before :func:`split` every row
    sits in ``U``.
    """

    views: tuple
    labels: np.ndarray
    L: np.ndarray
    U: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        n = self.labels.shape[0]
        for i, X in enumerate(self.views):
            if X.ndim != 2 or X.shape[0] != n:
                raise InputError(f"view {i} has shape {X.shape}, expected {n} rows")
        idx = np.concatenate([self.L, self.U, self.test])
        if idx.shape[0] != n or not np.array_equal(np.sort(idx), np.arange(n)):
            raise InputError("L, U and test must partition the sample indices")
        if np.any(self.labels[self.L] == UNKNOWN):
            raise InputError("every labeled index needs a known label")

    @classmethod
    def from_arrays(cls, views, labels):
        views = tuple(np.asarray(X, dtype=float) for X in views)
        labels = np.asarray(labels, dtype=np.int64).ravel()
        n = labels.shape[0]
        return cls(views, labels, np.zeros(0, np.int64), np.arange(n), np.zeros(0, np.int64))

    @property
    def n_samples(self):
        return self.labels.shape[0]

    @property
    def n_views(self):
        return len(self.views)

    def view_rows(self, idx):
        return [X[idx] for X in self.views]


def read_matrix(path):
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                row = [float(c) for c in rec]
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric cell") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise InputError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise InputError(f"{path}: empty file")
    return np.array(rows, dtype=float)


def _read_labels(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.strip()
            if not tok:
                continue
            if tok not in _LABEL_TOKENS:
                raise InputError(f"{path}:{lineno}: label must be -1, +1 or ?, got {tok!r}")
            out.append(_LABEL_TOKENS[tok])
    if not out:
        raise InputError(f"{path}: empty file")
    return np.array(out, dtype=np.int64)


def load(view_files, label_file):
    """Read headerless CSV view matrices and a one-token-per-line label file."""
    view_files = [Path(p) for p in view_files]
    if not view_files:
        raise InputError("at least one view file is required")
    views = [read_matrix(p) for p in view_files]
    labels = _read_labels(label_file)
    for p, X in zip(view_files, views):
        if X.shape[0] != labels.shape[0]:
            raise InputError(
                f"row count mismatch: {p} has {X.shape[0]} rows, {label_file} has {labels.shape[0]}"
            )
    return MultiViewDataset.from_arrays(views, labels)


def save(dataset, view_files, label_file):
    for X, p in zip(dataset.views, view_files):
        np.savetxt(p, X, delimiter=",", fmt="%.17g")
    tokens = {1: "+1", -1: "-1", UNKNOWN: "?"}
    Path(label_file).write_text("".join(tokens[int(v)] + "\n" for v in dataset.labels), encoding="utf-8")


def stratified_counts(n_labeled, classes=(-1, 1)):
    """Labeled slots per class; the extra slot of an odd count goes to the
    first class in sorted order."""
    hi = -(-n_labeled // 2)
    return {classes[0]: hi, classes[1]: n_labeled - hi}


def split(dataset, n_labeled, test_fraction=0.0, seed=0):
    """Draw a stratified labeled set, a test set, and put the rest in U.

    The test set is a uniform draw of ``round(test_fraction * n_known)``
    samples with known labels.  ``n_labeled`` samples are then drawn from
    the remaining known-label samples, split evenly across the two classes.
    """
    if n_labeled < 2:
        raise InputError(f"need at least 2 labeled samples, got {n_labeled}")
    if not 0.0 <= test_fraction < 1.0:
        raise InputError(f"test_fraction must lie in [0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    labels = dataset.labels
    known = np.flatnonzero(labels != UNKNOWN)
    n_test = int(round(test_fraction * known.shape[0]))
    perm = rng.permutation(known)
    test = np.sort(perm[:n_test])
    pool = perm[n_test:]

    chosen = []
    for cls, count in stratified_counts(n_labeled).items():
        members = pool[labels[pool] == cls]
        if members.shape[0] < count:
            raise InputError(
                f"requested {count} labeled samples of class {cls:+d}, only {members.shape[0]} available"
            )
        chosen.append(members[:count])
    L = np.sort(np.concatenate(chosen))
    in_use = np.zeros(dataset.n_samples, dtype=bool)
    in_use[L] = True
    in_use[test] = True
    U = np.flatnonzero(~in_use)
    return replace(dataset, L=L, U=U, test=test)


def length_normalize(dataset):
    """Scale every row of every view to unit Euclidean norm (zero rows kept)."""
    views = []
    for X in dataset.views:
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        views.append(np.where(norms > 0, X / np.where(norms > 0, norms, 1.0), X))
    return replace(dataset, views=tuple(views))


def _random_embedding(rng, d_latent, d):
    q, _ = np.linalg.qr(rng.normal(size=(d, d_latent)))
    return q.T


def synth_two_view(n_per_class, noise1=0.1, noise2=0.1, view_agreement=1.0, seed=0,
                   separation=1.0, dim=10, clutter_scale=3.0):
    """Two-view Gaussian blobs embedded by random rotations into ``dim`` dims.

    Class centers sit at ``+-separation`` on the first latent axis of each
    view.  A fraction ``1 - view_agreement`` of samples get view-2 latent
    positions replaced by class-independent clutter, a broad Gaussian with
    standard deviation ``clutter_scale * separation``: view 2 is sharp when
    it sees the target and uninformative otherwise.
    """
    if noise1 < 0 or noise2 < 0:
        raise InputError("noise levels must be nonnegative")
    if not 0.0 <= view_agreement <= 1.0:
        raise InputError(f"view_agreement must lie in [0, 1], got {view_agreement}")
    rng = np.random.default_rng(seed)
    n = 2 * n_per_class
    y = np.repeat(np.array([1, -1], dtype=np.int64), n_per_class)
    center = np.zeros((n, 2))
    center[:, 0] = separation * y

    z1 = center + noise1 * rng.normal(size=(n, 2))
    z2 = center + noise2 * rng.normal(size=(n, 2))
    n_bad = int(round((1.0 - view_agreement) * n))
    bad = rng.permutation(n)[:n_bad]
    z2[bad] = clutter_scale * separation * rng.normal(size=(n_bad, 2))

    X1 = z1 @ _random_embedding(rng, 2, dim)
    X2 = z2 @ _random_embedding(rng, 2, dim)
    order = rng.permutation(n)
    return MultiViewDataset.from_arrays([X1[order], X2[order]], y[order])
