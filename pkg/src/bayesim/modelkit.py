"""Model training, compilation to memory images, and exact float oracles.

The model layer is deliberately plain: per (feature, class) a parametric
density (gaussian, or lognormal fitted in the log domain), a shared
per-feature binning grid, an optional class transition matrix, and the
resulting per-bin likelihood tables.  ``compile_model`` turns the tables
into integer code images; ``oracle_infer`` / ``oracle_filter`` compute the
same decisions in exact float arithmetic and serve as the reference the
machines are judged against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import logprob, stochastic
from .errors import CompileError, ConfigError, DomainError, FormatError, TrainingError
from .machine import MachineConfig, MemoryImage

KINDS = ("gaussian", "lognormal")

_MODEL_VERSION = 1


@dataclass(frozen=True)
class FittedDistribution:
    """Location/scale summary of one feature under one class.

    For ``lognormal`` the location and scale describe the natural log of
    the data; densities and bin grids live in that transformed domain.
    """

    kind: str
    location: float
    scale: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown distribution kind {self.kind!r}")
        if not self.scale > 0:
            raise DomainError("scale must be positive")


def _fit_domain(kind: str, samples: np.ndarray) -> np.ndarray:
    if kind == "lognormal":
        if np.any(samples <= 0):
            raise TrainingError("lognormal fit needs strictly positive samples")
        return np.log(samples)
    return samples


def fit(kind: str, samples, scale_floor: float | None = None) -> FittedDistribution:
    """Moment fit: sample mean and (n-1)-normalized sample std.

    ``scale_floor`` keeps degenerate (near-constant) classes usable; when
    not given it defaults to 1e-6 of the sample range in the fitting
    domain, with an absolute fallback for exactly constant data.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise TrainingError(f"need at least 2 samples to fit, got {x.size}")
    x = _fit_domain(kind, x)
    loc = float(x.mean())
    scale = float(x.std(ddof=1))
    if scale_floor is None:
        span = float(x.max() - x.min())
        scale_floor = 1e-6 * span if span > 0 else 1e-6 * max(abs(loc), 1.0)
    return FittedDistribution(kind, loc, max(scale, float(scale_floor)))


def _density(dist: FittedDistribution, x: np.ndarray) -> np.ndarray:
    z = (x - dist.location) / dist.scale
    return np.exp(-0.5 * z * z) / (dist.scale * math.sqrt(2.0 * math.pi))


def _grid(dist: FittedDistribution, bins: int, span: float) -> np.ndarray:
    lo = dist.location - span * dist.scale
    hi = dist.location + span * dist.scale
    return np.linspace(lo, hi, bins + 1)


def discretize(dist: FittedDistribution, bins: int, span: float = 4.0,
               floor: float | None = None):
    """Bin one distribution: edges over location +- span*scale, likelihood =
    density at each bin center, scaled so the peak bin is 1 and floored at
    the smallest decodable probability.

    Returns (likelihoods, edges).  Edges are in the raw data domain (they
    are exponentiated back for lognormal), so bin lookup works directly on
    raw feature values; out-of-range values belong to the outermost bins.
    """
    if bins < 1:
        raise DomainError("need at least one bin")
    if floor is None:
        floor = logprob.min_prob(8)
    edges = _grid(dist, bins, span)
    centers = 0.5 * (edges[:-1] + edges[1:])
    dens = _density(dist, centers)
    like = np.maximum(dens / dens.max(), floor)
    if dist.kind == "lognormal":
        edges = np.exp(edges)
    return like, edges


def bin_index(edges: np.ndarray, values) -> np.ndarray:
    """Map raw values to bin addresses; the edge bins absorb the tails."""
    ix = np.searchsorted(edges, np.asarray(values, dtype=float), side="right") - 1
    return np.clip(ix, 0, len(edges) - 2).astype(np.int64)


def estimate_transitions(labels, classes: int, alpha: float = 1.0) -> np.ndarray:
    """Additively smoothed transition frequencies from a label sequence.

    Row i is p(next | current = i).  With alpha = 0, rows for states that
    never occur (or never lead anywhere) fall back to uniform.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise TrainingError("empty label sequence")
    if alpha < 0:
        raise DomainError("alpha must be >= 0")
    if np.any(labels < 0) or np.any(labels >= classes):
        raise TrainingError(f"labels outside [0, {classes})")
    counts = np.zeros((classes, classes), dtype=float)
    np.add.at(counts, (labels[:-1], labels[1:]), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    out = np.empty_like(counts)
    for i in range(classes):
        if totals[i, 0] + alpha * classes == 0:
            out[i] = 1.0 / classes
        else:
            out[i] = (counts[i] + alpha) / (totals[i, 0] + alpha * classes)
    return out


@dataclass
class BayesModel:
    """A trained model: per-feature bin grids and per-class likelihood tables.

    ``likelihood[c]`` is a (classes, bins[c]) table of probabilities in
    (0, 1]; ``bin_edges[c]`` has bins[c] + 1 raw-domain boundaries.
    ``transition`` is None for plain naive-Bayes models.
    """

    classes: int
    features: int
    bins: tuple
    likelihood: list
    prior: np.ndarray
    transition: np.ndarray | None
    bin_edges: list

    def __post_init__(self):
        self.bins = tuple(int(b) for b in self.bins)
        if self.classes < 1 or self.features < 1:
            raise ConfigError("need at least one class and one feature")
        if len(self.bins) != self.features or len(self.likelihood) != self.features:
            raise ConfigError("bins/likelihood must list one entry per feature")
        self.likelihood = [np.asarray(t, dtype=float) for t in self.likelihood]
        for c, t in enumerate(self.likelihood):
            if t.shape != (self.classes, self.bins[c]):
                raise ConfigError(f"feature {c}: table shape {t.shape} != "
                                  f"({self.classes}, {self.bins[c]})")
            if np.any(t <= 0) or np.any(t > 1):
                raise ConfigError(f"feature {c}: likelihoods must lie in (0, 1]")
        self.prior = np.asarray(self.prior, dtype=float)
        if self.prior.shape != (self.classes,) or np.any(self.prior < 0):
            raise ConfigError("prior must be a non-negative vector over classes")
        s = self.prior.sum()
        if not s > 0:
            raise ConfigError("prior must have positive mass")
        self.prior = self.prior / s
        if self.transition is not None:
            self.transition = np.asarray(self.transition, dtype=float)
            if self.transition.shape != (self.classes, self.classes):
                raise ConfigError("transition must be (classes, classes)")
            if np.any(self.transition < 0) or not np.allclose(self.transition.sum(axis=1), 1.0):
                raise ConfigError("transition rows must be distributions")
        self.bin_edges = [np.asarray(e, dtype=float) for e in self.bin_edges]
        for c, e in enumerate(self.bin_edges):
            if e.shape != (self.bins[c] + 1,) or np.any(np.diff(e) <= 0):
                raise ConfigError(f"feature {c}: edges must be {self.bins[c] + 1} "
                                  "strictly increasing values")


def train_model(
    features,
    labels,
    classes: int,
    bins,
    kind: str = "gaussian",
    with_transitions: bool = False,
    alpha: float = 1.0,
    span: float = 4.0,
    floor: float | None = None,
) -> BayesModel:
    """Fit one distribution per (feature, class) and tabulate likelihoods.

    The bin grid of a feature is shared by all classes (the machine
    addresses every class block with the same bin index), so it comes from
    a pooled fit over the whole feature column.  Each class table is that
    class's density on the shared grid; a whole column is then rescaled by
    its single largest value, which keeps every entry in (0, 1] without
    disturbing the posterior ordering.  The prior is uniform: class
    weighting is the transition column's job in filter models, and the
    naive arrangement has no prior column.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise TrainingError("features must be (samples, columns) matching labels")
    if classes < 1:
        raise TrainingError("need at least one class")
    if np.any(y < 0) or np.any(y >= classes):
        raise TrainingError(f"labels outside [0, {classes})")
    cols = X.shape[1]
    bins = (bins,) * cols if np.isscalar(bins) else tuple(int(b) for b in bins)
    if len(bins) != cols:
        raise TrainingError("bins must be one size or one per feature")
    if floor is None:
        floor = logprob.min_prob(8)

    tables, edge_list = [], []
    for c in range(cols):
        col = X[:, c]
        work = _fit_domain(kind, col)
        span_c = float(work.max() - work.min())
        scale_floor = 1e-6 * span_c if span_c > 0 else None
        pooled = fit(kind, col, scale_floor=scale_floor)
        edges_fit = _grid(pooled, bins[c], span)
        centers = 0.5 * (edges_fit[:-1] + edges_fit[1:])
        dens = np.empty((classes, bins[c]), dtype=float)
        for r in range(classes):
            cls = col[y == r]
            if cls.size < 2:
                raise TrainingError(f"class {r} has {cls.size} samples for feature {c}, need >= 2")
            dens[r] = _density(fit(kind, cls, scale_floor=scale_floor), centers)
        tables.append(np.maximum(dens / dens.max(), floor))
        edge_list.append(np.exp(edges_fit) if kind == "lognormal" else edges_fit)

    transition = estimate_transitions(y, classes, alpha) if with_transitions else None
    return BayesModel(
        classes=classes,
        features=cols,
        bins=bins,
        likelihood=tables,
        prior=np.full(classes, 1.0 / classes),
        transition=transition,
        bin_edges=edge_list,
    )


def bin_observations(model: BayesModel, features) -> np.ndarray:
    """Raw feature rows -> per-feature bin addresses, shape (samples, features)."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.shape[1] != model.features:
        raise ConfigError(f"expected {model.features} features, got {X.shape[1]}")
    return np.stack([bin_index(model.bin_edges[c], X[:, c]) for c in range(model.features)], axis=1)


def compile_model(model: BayesModel, config: MachineConfig) -> MemoryImage:
    """Quantize the model's tables into a machine memory image.

    Naive models need one machine column per feature.  Filter models (a
    transition matrix is present) put the transition tables into column 0:
    address v < classes holds p(class row | previous class v), address
    ``classes`` is the uniform unknown-state entry, and any remaining
    addresses are parked at probability zero since they are never driven.
    """
    filtered = model.transition is not None
    expected_cols = model.features + 1 if filtered else model.features
    if config.columns != expected_cols:
        raise CompileError(f"machine has {config.columns} columns, model needs {expected_cols}")
    if config.rows != model.classes:
        raise CompileError(f"machine has {config.rows} rows, model has {model.classes} classes")
    obs_values = config.values_per_column[1:] if filtered else config.values_per_column
    if tuple(obs_values) != model.bins:
        raise CompileError(f"machine value counts {obs_values} != model bins {model.bins}")

    width = config.likelihood_width
    if config.mode == "logarithmic":
        to_codes = lambda p: logprob.encode_array(p, width)
    else:
        to_codes = lambda p: stochastic.quantize_linear_array(p, width)

    prob_blocks = []
    if filtered:
        v0 = config.values_per_column[0]
        if v0 < model.classes + 1:
            raise CompileError(f"transition column holds {v0} values, "
                               f"needs >= classes+1 = {model.classes + 1}")
        col0 = np.zeros((model.classes, v0), dtype=float)
        col0[:, : model.classes] = model.transition.T  # [row, prev] = p(row | prev)
        col0[:, model.classes] = 1.0 / model.classes
        prob_blocks.append(col0)
    prob_blocks.extend(model.likelihood)
    return MemoryImage([to_codes(b) for b in prob_blocks], width, config.kind)


@dataclass
class OracleResult:
    posterior: np.ndarray
    winner: int
    degenerate: bool  # all products were zero; posterior fell back to uniform


def _check_model_obs(model: BayesModel, obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.int64)
    if obs.shape != (model.features,):
        raise ConfigError(f"expected {model.features} bin addresses, got {obs.shape}")
    for c, v in enumerate(obs):
        if not 0 <= v < model.bins[c]:
            raise ConfigError(f"address {v} out of range for feature {c}")
    return obs


def _posterior(model: BayesModel, weights: np.ndarray, obs: np.ndarray) -> OracleResult:
    post = weights.astype(float).copy()
    for c in range(model.features):
        post *= model.likelihood[c][:, obs[c]]
    s = post.sum()
    if s == 0.0:
        n = model.classes
        return OracleResult(np.full(n, 1.0 / n), 0, True)
    post /= s
    return OracleResult(post, int(np.argmax(post)), False)


def oracle_infer(model: BayesModel, obs) -> OracleResult:
    """Exact float posterior over classes; ties go to the lowest index."""
    return _posterior(model, model.prior, _check_model_obs(model, obs))


def oracle_filter(model: BayesModel, obs_seq) -> list:
    """Exact counterpart of the machine filter, with the same hard-decision
    feedback: step t weights classes by transition[winner(t-1)], not by the
    full posterior.  Step 0 uses uniform weights (unknown state).  Returns
    the winner sequence."""
    if model.transition is None:
        raise ConfigError("filter needs a model with transitions")
    obs_seq = np.atleast_2d(np.asarray(obs_seq, dtype=np.int64))
    winners = []
    weights = np.full(model.classes, 1.0 / model.classes)
    for t in range(obs_seq.shape[0]):
        res = _posterior(model, weights, _check_model_obs(model, obs_seq[t]))
        winners.append(res.winner)
        weights = model.transition[res.winner]
    return winners


def soft_filter_diagnostic(model: BayesModel, obs_seq) -> np.ndarray:
    """Full-posterior forward recursion (no hard decisions).

    Diagnostic only: no machine implements this, so do not compare its
    output against machine runs.  Returns the (steps, classes) posterior
    trajectory."""
    if model.transition is None:
        raise ConfigError("filter needs a model with transitions")
    obs_seq = np.atleast_2d(np.asarray(obs_seq, dtype=np.int64))
    out = np.empty((obs_seq.shape[0], model.classes))
    weights = np.full(model.classes, 1.0 / model.classes)
    for t in range(obs_seq.shape[0]):
        res = _posterior(model, weights, _check_model_obs(model, obs_seq[t]))
        out[t] = res.posterior
        weights = model.transition.T @ res.posterior
    return out


def model_to_json(model: BayesModel) -> str:
    doc = {
        "version": _MODEL_VERSION,
        "classes": model.classes,
        "features": model.features,
        "bins": list(model.bins),
        "likelihood": [t.tolist() for t in model.likelihood],
        "prior": model.prior.tolist(),
        "transition": None if model.transition is None else model.transition.tolist(),
        "bin_edges": [e.tolist() for e in model.bin_edges],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str, source: str = "<model>") -> BayesModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("version") != _MODEL_VERSION:
        raise FormatError(f"{source}: not a version-{_MODEL_VERSION} model file")
    try:
        return BayesModel(
            classes=doc["classes"],
            features=doc["features"],
            bins=tuple(doc["bins"]),
            likelihood=doc["likelihood"],
            prior=doc["prior"],
            transition=doc["transition"],
            bin_edges=doc["bin_edges"],
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{source}: bad model fields ({exc})") from exc


def save_model(path, model: BayesModel) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> BayesModel:
    with open(path) as fh:
        return model_from_json(fh.read(), source=str(path))
