"""Desk-scale rate-distortion sweep.

Synthetic feature sources stand in for an encoder's outputs.  For every
seed a parent codebook is trained with k-means, ranked once, and then
resized to each child size; each child is compared against a k-means
codebook trained directly at that size ("dedicated") and a uniformly
random subset of the parent ("random-subset").  Distortion is the mean
squared quantization error on held-out samples.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from ._backend import kernels
from .codebook import EuclideanCodebook
from .codec import bits_per_index
from .errors import InvalidInputError
from .geometry import as_float_array
from .ranking import compute_ranking, resize

log = logging.getLogger(__name__)

METHODS = ("dedicated", "random-subset", "zero-shot")
SOURCE_KINDS = ("gaussian-mixture", "hierarchical-gaussian")

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6


@dataclass(frozen=True)
class SyntheticSource:
    """Gaussian feature generator, fully determined by its fields.

    ``seed`` fixes the component layout; :meth:`sample` takes a separate
    seed for the draws so train and test sets can differ while the
    distribution stays fixed.

    hierarchical-gaussian
        ``n_parents`` broad components with means ~ N(0, parent_scale^2),
        each surrounded by ``children_per_parent`` narrow components offset
        by N(0, child_offset^2).  A draw comes from a broad parent
        (sd ``parent_spread``) with probability ``parent_weight`` and from
        one of its children (sd ``child_spread``) otherwise.
    gaussian-mixture
        ``n_components`` equally weighted components with means
        ~ N(0, center_scale^2) and sd ``spread``.
    """

    kind: str = "hierarchical-gaussian"
    dim: int = 16
    seed: int = 0
    n_parents: int = 8
    children_per_parent: int = 16
    parent_scale: float = 0.35
    child_offset: float = 0.15
    parent_spread: float = 0.12
    child_spread: float = 0.03
    parent_weight: float = 0.25
    n_components: int = 64
    center_scale: float = 0.35
    spread: float = 0.05

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise InvalidInputError(f"unknown source kind {self.kind!r}; expected one of {SOURCE_KINDS}")
        if self.dim < 1:
            raise InvalidInputError("dim must be >= 1")
        if not 0.0 <= self.parent_weight <= 1.0:
            raise InvalidInputError("parent_weight must lie in [0, 1]")
        for name in ("n_parents", "children_per_parent", "n_components"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")

    def components(self):
        """``(means, sds, weights)`` of every mixture component."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x5EED]))
        if self.kind == "gaussian-mixture":
            means = rng.normal(0.0, self.center_scale, (self.n_components, self.dim))
            sds = np.full(self.n_components, self.spread)
            weights = np.full(self.n_components, 1.0 / self.n_components)
            return means, sds, weights
        p, c = self.n_parents, self.children_per_parent
        parent_means = rng.normal(0.0, self.parent_scale, (p, self.dim))
        child_means = parent_means[:, None, :] + rng.normal(0.0, self.child_offset, (p, c, self.dim))
        means = np.concatenate([parent_means, child_means.reshape(p * c, self.dim)])
        sds = np.concatenate([np.full(p, self.parent_spread), np.full(p * c, self.child_spread)])
        weights = np.concatenate([
            np.full(p, self.parent_weight / p),
            np.full(p * c, (1.0 - self.parent_weight) / (p * c)),
        ])
        return means, sds, weights

    def sample(self, n: int, seed: int, stream: int = 0) -> np.ndarray:
        means, sds, weights = self.components()
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, seed, stream]))
        which = rng.choice(len(weights), size=n, p=weights)
        return means[which] + rng.standard_normal((n, self.dim)) * sds[which, None]


@dataclass(frozen=True, order=True)
class EvalRecord:
    seed: int
    method: str
    kb_size: int
    bits_per_index: int
    mse: float


def _as_samples(samples, name="samples"):
    x = np.ascontiguousarray(as_float_array(samples, name))
    if x.ndim != 2 or x.shape[1] < 1:
        raise InvalidInputError(f"{name} must have shape (n, dim), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} contain non-finite values")
    return x


def train_dedicated_kb(samples, size: int, seed: int) -> EuclideanCodebook:
    """k-means codebook: k-means++ seeding, then Lloyd to tolerance or 100 iterations.

    The tolerance is on the summed squared center shift, relative to the
    mean per-coordinate variance of ``samples``.
    """
    x = _as_samples(samples)
    if not 1 <= size <= x.shape[0]:
        raise InvalidInputError(f"need at least {size} samples for {size} centers, got {x.shape[0]}")
    uniforms = np.random.default_rng(seed).random(size)
    centers = x[kernels.kmeanspp_indices(x, uniforms)].copy()
    tol = KMEANS_TOL * float(np.mean(np.var(x, axis=0)))
    _, n_iter = kernels.lloyd(x, centers, KMEANS_MAX_ITER, tol)
    log.debug("k-means K=%d converged after %d iterations", size, n_iter)
    return EuclideanCodebook(centers)


def random_subset_kb(parent: EuclideanCodebook, size: int, seed: int) -> EuclideanCodebook:
    if isinstance(size, bool) or not isinstance(size, (int, np.integer)) or not 1 <= size <= parent.size:
        raise InvalidInputError(f"size must be an integer in [1, {parent.size}], got {size!r}")
    pick = np.random.default_rng(seed).choice(parent.size, size=size, replace=False)
    return EuclideanCodebook(parent.vectors[pick])


def evaluate_mse(kb: EuclideanCodebook, test) -> float:
    """Mean over ``test`` of the squared distance to the nearest codebook vector."""
    x = _as_samples(test, "test vectors")
    if x.shape[0] == 0:
        raise InvalidInputError("test set is empty")
    if x.shape[1] != kb.dim:
        raise InvalidInputError(f"test dim {x.shape[1]} != codebook dim {kb.dim}")
    _, d2 = kernels.nearest(x, np.ascontiguousarray(kb.vectors))
    return float(np.mean(d2))


def _run_seed(source, parent_size, child_sizes, n_train, n_test, seed):
    train = source.sample(n_train, seed, stream=0)
    test = source.sample(n_test, seed, stream=1)
    parent = train_dedicated_kb(train, parent_size, seed)
    ranking = compute_ranking(parent)
    out = []
    for k in child_sizes:
        dedicated = parent if k == parent_size else train_dedicated_kb(train, k, seed)
        kbs = {
            "zero-shot": resize(parent, ranking, k),
            "dedicated": dedicated,
            "random-subset": random_subset_kb(parent, k, seed),
        }
        for method, kb in kbs.items():
            out.append(EvalRecord(seed, method, k, bits_per_index(k), evaluate_mse(kb, test)))
    log.info("seed %d done", seed)
    return out


def run_sweep(source: SyntheticSource, parent_size: int, child_sizes, n_train: int, n_test: int,
              seeds, threads: int = 1) -> list[EvalRecord]:
    """Evaluate every (seed, size, method) cell; records come back sorted.

    Each seed is independent, so ``threads > 1`` runs seeds concurrently
    (the kernels release the GIL) without changing the output.
    """
    child_sizes = [int(k) for k in child_sizes]
    if not child_sizes:
        raise InvalidInputError("child_sizes is empty")
    if child_sizes != sorted(child_sizes) or len(set(child_sizes)) != len(child_sizes):
        raise InvalidInputError("child_sizes must be strictly ascending")
    if child_sizes[0] < 1 or child_sizes[-1] > parent_size:
        raise InvalidInputError(f"child sizes must lie in [1, {parent_size}]")
    if n_train < parent_size:
        raise InvalidInputError(f"n_train ({n_train}) must be >= parent_size ({parent_size})")
    if n_test < 1:
        raise InvalidInputError("n_test must be >= 1")
    seeds = [int(s) for s in seeds]
    job = lambda s: _run_seed(source, parent_size, child_sizes, n_train, n_test, s)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(job, seeds))
    else:
        chunks = [job(s) for s in seeds]
    return sorted(r for chunk in chunks for r in chunk)


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "method", "K", "bits_per_index", "mse"])
    for r in sorted(records):
        w.writerow([r.seed, r.method, r.kb_size, r.bits_per_index, f"{r.mse:.17g}"])
    return buf.getvalue()


def read_records_csv(text: str) -> list[EvalRecord]:
    rows = csv.DictReader(io.StringIO(text))
    return [EvalRecord(int(r["seed"]), r["method"], int(r["K"]), int(r["bits_per_index"]), float(r["mse"]))
            for r in rows]


@dataclass(frozen=True)
class SummaryRow:
    method: str
    kb_size: int
    bits_per_index: int
    n_seeds: int
    mse_mean: float
    mse_std: float
    ratio_to_dedicated: float


def summarize(records) -> list[SummaryRow]:
    """Per (method, K) mean and sample standard deviation over seeds.

    ``ratio_to_dedicated`` is the method's mean MSE over the dedicated mean
    MSE at the same K (NaN when no dedicated record exists).
    """
    groups: dict[tuple[str, int], list[float]] = {}
    for r in sorted(records):
        groups.setdefault((r.method, r.kb_size), []).append(r.mse)
    means = {key: float(np.mean(v)) for key, v in groups.items()}
    rows = []
    for (method, k), values in sorted(groups.items()):
        ded = means.get(("dedicated", k))
        if ded is None:
            ratio = math.nan
        elif ded == 0.0:
            ratio = 1.0 if means[(method, k)] == 0.0 else math.inf
        else:
            ratio = means[(method, k)] / ded
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        rows.append(SummaryRow(method, k, bits_per_index(k), len(values), means[(method, k)], std, ratio))
    return rows


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "K", "bits_per_index", "n_seeds", "mse_mean", "mse_std", "ratio_to_dedicated"])
    for r in rows:
        w.writerow([r.method, r.kb_size, r.bits_per_index, r.n_seeds,
                    f"{r.mse_mean:.17g}", f"{r.mse_std:.17g}", f"{r.ratio_to_dedicated:.17g}"])
    return buf.getvalue()


def sanity_issues(records) -> list[str]:
    """Configuration warnings: sizes where k-means loses to random selection on average."""
    rows = {(r.method, r.kb_size): r for r in summarize(records)}
    issues = []
    for (method, k), row in sorted(rows.items()):
        rnd = rows.get(("random-subset", k))
        if method == "dedicated" and rnd is not None and row.mse_mean > rnd.mse_mean:
            issues.append(f"K={k}: dedicated mean MSE {row.mse_mean:.6g} exceeds random-subset {rnd.mse_mean:.6g}")
    return issues


# --------------------------------------------------------------------------- config

DEFAULT_CHILD_SIZES = (16, 32, 64, 128, 256, 512, 1024, 2048, 4096)


@dataclass(frozen=True)
class SweepConfig:
    source: SyntheticSource = field(default_factory=SyntheticSource)
    parent_size: int = 4096
    child_sizes: tuple = DEFAULT_CHILD_SIZES
    n_train: int = 100_000
    n_test: int = 10_000
    seeds: tuple = tuple(range(10))
    threads: int = 1
    records_file: str = "records.csv"
    summary_file: str = "summary.csv"

    def run(self) -> list[EvalRecord]:
        return run_sweep(self.source, self.parent_size, self.child_sizes, self.n_train,
                         self.n_test, self.seeds, threads=self.threads)


class ConfigError(InvalidInputError):
    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)


def _int_list(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


_SWEEP_KEYS = {
    "parent_size": int,
    "child_sizes": _int_list,
    "n_train": int,
    "n_test": int,
    "seeds": _int_list,
    "threads": int,
}
_OUTPUT_KEYS = {"records": str, "summary": str}


def _source_keys():
    casts = {}
    for f in fields(SyntheticSource):
        casts[f.name] = {"int": int, "float": float, "str": str}[f.type]
    return casts


def parse_config(text: str) -> SweepConfig:
    """Read an INI document with ``[source]``, ``[sweep]`` and ``[output]`` sections.

    Every key is optional; unknown sections or keys raise :class:`ConfigError`.
    """
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    schema = {"source": _source_keys(), "sweep": _SWEEP_KEYS, "output": _OUTPUT_KEYS}
    values: dict[str, dict] = {name: {} for name in schema}
    for section in cp.sections():
        if section not in schema:
            raise ConfigError(f"unknown config section [{section}]", key=section)
        for key, raw in cp.items(section):
            if key not in schema[section]:
                raise ConfigError(f"unknown config key {section}.{key}", key=f"{section}.{key}")
            try:
                values[section][key] = schema[section][key](raw.strip())
            except ValueError:
                raise ConfigError(f"invalid value for {section}.{key}: {raw!r}", key=f"{section}.{key}") from None
    try:
        source = SyntheticSource(**values["source"])
    except InvalidInputError as exc:
        raise ConfigError(f"invalid [source]: {exc}", key="source") from None
    out = values["output"]
    cfg = SweepConfig(source=source, **values["sweep"],
                      records_file=out.get("records", "records.csv"),
                      summary_file=out.get("summary", "summary.csv"))
    for name in ("records_file", "summary_file"):
        if os.path.basename(getattr(cfg, name)) != getattr(cfg, name):
            raise ConfigError(f"output.{name[:-5]} must be a bare file name", key=f"output.{name[:-5]}")
    return cfg


def default_config_text() -> str:
    """INI text spelling out every default."""
    s = SyntheticSource()
    cfg = SweepConfig()
    lines = ["[source]"]
    lines += [f"{f.name} = {getattr(s, f.name)}" for f in fields(SyntheticSource)]
    lines += [
        "",
        "[sweep]",
        f"parent_size = {cfg.parent_size}",
        f"child_sizes = {', '.join(map(str, cfg.child_sizes))}",
        f"n_train = {cfg.n_train}",
        f"n_test = {cfg.n_test}",
        f"seeds = {', '.join(map(str, cfg.seeds))}",
        f"threads = {cfg.threads}",
        "",
        "[output]",
        f"records = {cfg.records_file}",
        f"summary = {cfg.summary_file}",
    ]
    return "\n".join(lines) + "\n"
