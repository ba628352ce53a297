"""Feature extraction, feature selection, and synthetic task generators.

Two task families mirror the hardware experiments: a sequential
"sleep_like" task (hidden Markov states, lognormal band-power features,
solved with the recursive filter) and an i.i.d. "gesture_like" task
(class-conditional gaussian features, solved with plain naive Bayes).
Raw-signal CSV rows can be reduced to those features here: single-bin
spectral power via the Goertzel recurrence for EEG bands, mean square
power for EMG, and simple time-domain statistics for accelerometer
traces.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import modelkit
from .errors import DomainError, FormatError

_DATASET_VERSION = 1
_SPEC_VERSION = 1

SLEEP_FEATURE_NAMES = ("eeg_delta_1p5hz", "eeg_alpha_9p35hz", "emg_power")
GESTURE_FEATURE_NAMES = (
    "mean_ax", "mean_ay", "mean_az",
    "max_ax", "max_ay", "max_az",
    "var_mag", "mean_mag", "mean_jerk", "max_jerk",
)


# ---- signal statistics ----

def psd_at(signal, fs: float, f0: float) -> float:
    """Normalized single-bin spectral power |X_k|^2 / N^2 at the DFT bin
    nearest f0, computed with the Goertzel recurrence (rectangular window).

    A unit-amplitude sine sitting exactly on a bin yields 0.25.
    """
    x = np.asarray(signal, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise DomainError("need at least 2 samples")
    if fs <= 0:
        raise DomainError("sample rate must be positive")
    if not 0.0 < f0 < fs / 2.0:
        raise DomainError(f"target frequency {f0} outside (0, fs/2)")
    k = int(math.floor(n * f0 / fs + 0.5))
    coeff = 2.0 * math.cos(2.0 * math.pi * k / n)
    q1 = q2 = 0.0
    for v in x:
        q1, q2 = v + coeff * q1 - q2, q1
    return (q1 * q1 + q2 * q2 - coeff * q1 * q2) / (n * n)


def signal_power(signal) -> float:
    """Mean squared sample value."""
    x = np.asarray(signal, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("empty signal")
    return float(np.mean(x * x))


def sleep_features(eeg, emg, fs: float) -> np.ndarray:
    """One epoch of raw EEG/EMG -> (delta power, alpha power, EMG power)."""
    return np.array([
        psd_at(eeg, fs, 1.5),
        psd_at(eeg, fs, 9.35),
        signal_power(emg),
    ])


def gesture_features(accel, dt: float) -> np.ndarray:
    """One 3-axis accelerometer trace -> the ten gesture statistics.

    Order follows GESTURE_FEATURE_NAMES: per-axis means, per-axis maxima,
    variance and mean of the magnitude, then mean and max jerk, where jerk
    is the absolute finite difference of the magnitude over dt.
    """
    a = np.asarray(accel, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3 or a.shape[0] < 2:
        raise DomainError("accel trace must be (samples >= 2, 3 axes)")
    if dt <= 0:
        raise DomainError("dt must be positive")
    mag = np.linalg.norm(a, axis=1)
    jerk = np.abs(np.diff(mag)) / dt
    return np.concatenate([
        a.mean(axis=0),
        a.max(axis=0),
        [mag.var(), mag.mean(), jerk.mean(), jerk.max()],
    ])


# ---- feature selection ----

def select_features(features, labels, classes: int, budget: int = 6,
                    bins: int = 64, kind: str = "gaussian") -> list:
    """Greedy forward selection maximizing training-set oracle accuracy.

    Each round retrains a naive-Bayes model on the already-selected
    features plus one candidate and keeps the candidate with the best
    exact-posterior accuracy on the same training set.  Ties go to the
    lowest feature index.  Returns the selected indices in pick order.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if budget < 1:
        raise DomainError("budget must be >= 1")
    selected: list[int] = []
    remaining = list(range(X.shape[1]))
    while remaining and len(selected) < budget:
        best_ix, best_acc = None, -1.0
        for cand in remaining:
            cols = selected + [cand]
            model = modelkit.train_model(X[:, cols], y, classes, bins, kind=kind)
            obs = modelkit.bin_observations(model, X[:, cols])
            hits = sum(modelkit.oracle_infer(model, o).winner == t for o, t in zip(obs, y))
            acc = hits / len(y)
            if acc > best_acc:
                best_ix, best_acc = cand, acc
        selected.append(best_ix)
        remaining.remove(best_ix)
    return selected


# ---- synthetic tasks ----

@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Everything needed to regenerate a synthetic dataset bit-for-bit.

    ``locations``/``scales`` are (classes, features) emission parameters;
    for sleep_like they live in the log domain (emissions are lognormal)
    and ``transition`` drives the hidden state chain.  ``train_size`` and
    ``test_size`` count chain steps for sleep_like and samples per class
    for gesture_like.
    """

    kind: str
    classes: int
    features: int
    locations: tuple
    scales: tuple
    transition: tuple | None
    train_size: int
    test_size: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("sleep_like", "gesture_like"):
            raise DomainError(f"unknown task kind {self.kind!r}")
        loc = np.asarray(self.locations, dtype=float)
        sc = np.asarray(self.scales, dtype=float)
        if loc.shape != (self.classes, self.features) or sc.shape != loc.shape:
            raise DomainError("locations/scales must be (classes, features)")
        if np.any(sc <= 0):
            raise DomainError("scales must be positive")
        object.__setattr__(self, "locations", tuple(map(tuple, loc.tolist())))
        object.__setattr__(self, "scales", tuple(map(tuple, sc.tolist())))
        if self.kind == "sleep_like":
            if self.transition is None:
                raise DomainError("sleep_like needs a transition matrix")
            tr = np.asarray(self.transition, dtype=float)
            if tr.shape != (self.classes, self.classes) or np.any(tr < 0) \
                    or not np.allclose(tr.sum(axis=1), 1.0):
                raise DomainError("transition rows must be distributions over classes")
            object.__setattr__(self, "transition", tuple(map(tuple, tr.tolist())))
        elif self.transition is not None:
            raise DomainError("gesture_like takes no transition matrix")
        if self.train_size < 1 or self.test_size < 1:
            raise DomainError("train_size and test_size must be >= 1")


def _uniform_offdiag(classes: int, stay: float) -> np.ndarray:
    t = np.full((classes, classes), (1.0 - stay) / (classes - 1))
    np.fill_diagonal(t, stay)
    return t


def sleep_like_spec(seed: int = 0, train_size: int = 2000, test_size: int = 600,
                    self_transition: float = 0.95) -> SyntheticTaskSpec:
    """Default 4-state sleep-like task: sticky chain, lognormal band powers."""
    pattern = np.array([
        [0.0, 0.0, 2.0],
        [0.0, 2.0, 0.0],
        [2.0, 0.0, 0.0],
        [2.0, 2.0, 2.0],
    ])
    sigma = 0.8
    return SyntheticTaskSpec(
        kind="sleep_like",
        classes=4,
        features=3,
        locations=tuple(map(tuple, (sigma * pattern).tolist())),
        scales=tuple(map(tuple, np.full((4, 3), sigma).tolist())),
        transition=tuple(map(tuple, _uniform_offdiag(4, self_transition).tolist())),
        train_size=train_size,
        test_size=test_size,
        seed=seed,
    )


def gesture_like_spec(seed: int = 0, train_size: int = 200, test_size: int = 50) -> SyntheticTaskSpec:
    """Default 4-class gesture-like task: six gaussian features per class."""
    pattern = np.array([
        [+1, +1, +1, +1, +1, +1],
        [+1, -1, +1, -1, +1, -1],
        [+1, +1, -1, -1, +1, +1],
        [+1, -1, -1, +1, +1, -1],
    ], dtype=float)
    return SyntheticTaskSpec(
        kind="gesture_like",
        classes=4,
        features=6,
        locations=tuple(map(tuple, pattern.tolist())),
        scales=tuple(map(tuple, np.ones((4, 6)).tolist())),
        transition=None,
        train_size=train_size,
        test_size=test_size,
        seed=seed,
    )


@dataclass
class Dataset:
    features: np.ndarray  # (samples, features) float
    labels: np.ndarray  # (samples,) int; sequential order matters for sleep_like

    def __len__(self):
        return len(self.labels)


def _gen_chain(rng: np.random.Generator, spec: SyntheticTaskSpec, steps: int) -> Dataset:
    tr = np.asarray(spec.transition)
    loc = np.asarray(spec.locations)
    sc = np.asarray(spec.scales)
    labels = np.empty(steps, dtype=np.int64)
    labels[0] = rng.integers(spec.classes)
    for t in range(1, steps):
        labels[t] = rng.choice(spec.classes, p=tr[labels[t - 1]])
    feats = np.exp(rng.normal(loc[labels], sc[labels]))
    return Dataset(feats, labels)


def _gen_iid(rng: np.random.Generator, spec: SyntheticTaskSpec, per_class: int) -> Dataset:
    loc = np.asarray(spec.locations)
    sc = np.asarray(spec.scales)
    feats = np.concatenate([
        rng.normal(loc[r], sc[r], size=(per_class, spec.features))
        for r in range(spec.classes)
    ])
    labels = np.repeat(np.arange(spec.classes, dtype=np.int64), per_class)
    order = rng.permutation(len(labels))
    return Dataset(feats[order], labels[order])


def generate(spec: SyntheticTaskSpec):
    """Deterministically generate (train, test) datasets for a task spec."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "sleep_like":
        return _gen_chain(rng, spec, spec.train_size), _gen_chain(rng, spec, spec.test_size)
    return _gen_iid(rng, spec, spec.train_size), _gen_iid(rng, spec, spec.test_size)


# ---- task spec and dataset files ----

def save_task_spec(path, spec: SyntheticTaskSpec) -> None:
    doc = {
        "version": _SPEC_VERSION,
        "kind": spec.kind,
        "classes": spec.classes,
        "features": spec.features,
        "locations": [list(r) for r in spec.locations],
        "scales": [list(r) for r in spec.scales],
        "transition": None if spec.transition is None else [list(r) for r in spec.transition],
        "train_size": spec.train_size,
        "test_size": spec.test_size,
        "seed": spec.seed,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_task_spec(path) -> SyntheticTaskSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("version") != _SPEC_VERSION:
        raise FormatError(f"{path}: not a version-{_SPEC_VERSION} task spec")
    try:
        return SyntheticTaskSpec(
            kind=doc["kind"],
            classes=doc["classes"],
            features=doc["features"],
            locations=doc["locations"],
            scales=doc["scales"],
            transition=doc["transition"],
            train_size=doc["train_size"],
            test_size=doc["test_size"],
            seed=doc.get("seed", 0),
        )
    except (KeyError, TypeError, DomainError) as exc:
        raise FormatError(f"{path}: bad task spec ({exc})") from exc


def save_dataset(path, ds: Dataset, fs: float = 0.0, dt: float = 0.0,
                 manifest: str | None = None) -> None:
    """Write a feature dataset CSV; floats keep full round-trip precision."""
    tail = "" if manifest is None else f" manifest={manifest}"
    with open(path, "w", newline="") as fh:
        fh.write(f"# bayesim-dataset version={_DATASET_VERSION} kind=features "
                 f"fs={fs!r} dt={dt!r} columns={ds.features.shape[1]}{tail}\n")
        w = csv.writer(fh)
        for row, label in zip(ds.features, ds.labels):
            w.writerow([int(label)] + [repr(float(v)) for v in row])


def _parse_header(line: str, path) -> dict:
    parts = line.strip().split()
    if len(parts) < 2 or parts[0] != "#" or parts[1] != "bayesim-dataset":
        raise FormatError(f"{path}:1: missing dataset header")
    fields = {}
    for tok in parts[2:]:
        key, _, val = tok.partition("=")
        fields[key] = val
    if fields.get("version") != str(_DATASET_VERSION):
        raise FormatError(f"{path}:1: unsupported dataset version {fields.get('version')}")
    return fields


def load_dataset(path) -> Dataset:
    """Read a dataset CSV.  kind=features rows hold label + feature values;
    kind=sleep_signal rows hold label + eeg_len EEG + emg_len EMG samples;
    kind=gesture_signal rows hold label + interleaved x,y,z samples.  Raw
    signal rows are reduced to features on load."""
    with open(path, newline="") as fh:
        header = _parse_header(fh.readline(), path)
        kind = header.get("kind", "features")
        feats, labels = [], []
        for ln, row in enumerate(csv.reader(fh), start=2):
            if not row:
                continue
            try:
                label = int(row[0])
                vals = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{ln}: {exc}") from exc
            if kind == "features":
                want = int(header["columns"])
                if vals.size != want:
                    raise FormatError(f"{path}:{ln}: expected {want} features, got {vals.size}")
                feats.append(vals)
            elif kind == "sleep_signal":
                fs = float(header["fs"])
                ne, nm = int(header["eeg_len"]), int(header["emg_len"])
                if vals.size != ne + nm:
                    raise FormatError(f"{path}:{ln}: expected {ne + nm} samples, got {vals.size}")
                feats.append(sleep_features(vals[:ne], vals[ne:], fs))
            elif kind == "gesture_signal":
                if vals.size % 3:
                    raise FormatError(f"{path}:{ln}: 3-axis samples must come in triples")
                feats.append(gesture_features(vals.reshape(-1, 3), float(header["dt"])))
            else:
                raise FormatError(f"{path}:1: unknown dataset kind {kind!r}")
            labels.append(label)
    if not labels:
        raise FormatError(f"{path}: no data rows")
    return Dataset(np.vstack(feats), np.asarray(labels, dtype=np.int64))
