"""Dataset assembly: record ingestion, low-pass pre-filtering, pairing of
realizations with their surrogates, per-realization standardization, and
leak-free train/validation/test splitting.

Splits are assigned per *pair*: a realization and its surrogate twin always
land in the same split, otherwise the classifier could memorize a training
original and recognize its surrogate in the test set.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import LengthError, ParameterError, ParseError, SplitError
from .seeding import derived_seed
from .series import TimeSeries, as_samples
from .spectral import SurrogateConfig, make_surrogate

SPLITS = ("train", "validation", "test")

LABEL_ORIGINAL = 1
LABEL_SURROGATE = 0


# ---------------------------------------------------------------------------
# Record ingestion
# ---------------------------------------------------------------------------

def load_series(path, fmt: str = "column") -> TimeSeries:
    """Read a record from disk.

    ``fmt="column"`` expects one numeral per line; ``fmt="row"`` expects a
    single comma-separated line.  Blank lines are skipped; anything else
    that does not parse raises with its 1-based line number.
    """
    path = Path(path)
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            fields = text.split(",") if fmt == "row" else [text]
            for tok in fields:
                tok = tok.strip()
                try:
                    values.append(float(tok))
                except ValueError:
                    raise ParseError(
                        f"{path}: line {lineno}: cannot parse {tok!r} as a number",
                        line=lineno,
                    ) from None
    if not values:
        raise LengthError(f"{path} contains no samples")
    return TimeSeries(np.array(values), meta={"source": str(path)})


def save_series(path, series, fmt: str = "column") -> None:
    """Write a record with 17 significant digits (lossless round-trip)."""
    samples = as_samples(series)
    path = Path(path)
    with open(path, "w") as fh:
        if fmt == "row":
            fh.write(",".join(f"{v:.17g}" for v in samples) + "\n")
        else:
            for v in samples:
                fh.write(f"{v:.17g}\n")


# ---------------------------------------------------------------------------
# Butterworth low-pass pre-filter
# ---------------------------------------------------------------------------

@dataclass
class FilterSpec:
    """Low-pass design: order (4 by default), cutoff and rate in Hz."""

    cutoff_hz: float
    sampling_rate_hz: float
    order: int = 4

    def __post_init__(self):
        if self.order < 1:
            raise ParameterError(f"filter order must be positive, got {self.order}")
        if not self.sampling_rate_hz > 0:
            raise ParameterError("sampling rate must be positive")
        if not 0.0 < self.cutoff_hz < self.sampling_rate_hz / 2.0:
            raise ParameterError(
                f"cutoff {self.cutoff_hz} Hz must lie in (0, Nyquist="
                f"{self.sampling_rate_hz / 2.0} Hz)"
            )


def design_butterworth_lowpass(spec: FilterSpec) -> tuple:
    """Digital Butterworth low-pass via the bilinear transform.

    The analog prototype cutoff is prewarped with tan so the digital
    response hits exactly -3.01 dB at ``spec.cutoff_hz``.  Returns the
    difference-equation coefficients (b, a) with a[0] = 1 and unit DC gain.
    """
    n = spec.order
    fs = spec.sampling_rate_hz
    warped = 2.0 * fs * np.tan(np.pi * spec.cutoff_hz / fs)
    k = np.arange(1, n + 1)
    angles = np.pi * (2 * k + n - 1) / (2 * n)
    poles_s = warped * np.exp(1j * angles)          # left half-plane
    poles_z = (2.0 * fs + poles_s) / (2.0 * fs - poles_s)
    zeros_z = -np.ones(n)
    b = np.real(np.poly(zeros_z))
    a = np.real(np.poly(poles_z))                   # monic by construction
    b *= a.sum() / b.sum()                          # H(z=1) = 1
    return b, a


def _iir_forward(b: np.ndarray, a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Single causal pass, direct form II transposed."""
    order = b.size - 1
    z = np.zeros(order)
    y = np.empty_like(x)
    for i, xi in enumerate(x):
        yi = b[0] * xi + z[0]
        for k in range(order - 1):
            z[k] = b[k + 1] * xi + z[k + 1] - a[k + 1] * yi
        z[order - 1] = b[order] * xi - a[order] * yi
        y[i] = yi
    return y


def butterworth_lowpass(series, spec: FilterSpec) -> TimeSeries:
    """Causal low-pass filtering of a series (single forward pass)."""
    samples = as_samples(series)
    if samples.size < 8:
        raise LengthError(f"need at least 8 samples to filter, got {samples.size}")
    b, a = design_butterworth_lowpass(spec)
    filtered = _iir_forward(b, a, samples)
    if isinstance(series, TimeSeries):
        return series.with_samples(filtered, filtered={
            "order": spec.order, "cutoff_hz": spec.cutoff_hz,
            "sampling_rate_hz": spec.sampling_rate_hz,
        })
    return TimeSeries(filtered)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

def standardize(realization) -> TimeSeries:
    """Zero-mean unit-variance rescaling (population std) per realization.

    A constant realization maps to all zeros by convention.
    """
    samples = as_samples(realization)
    if samples.size < 2:
        raise LengthError("standardization needs at least 2 samples")
    centered = samples - samples.mean()
    std = np.sqrt(np.mean(centered**2))
    scaled = np.zeros_like(samples) if std == 0.0 else centered / std
    if isinstance(realization, TimeSeries):
        return realization.with_samples(scaled, standardized=True)
    return TimeSeries(scaled, meta={"standardized": True})


# ---------------------------------------------------------------------------
# Labeled datasets
# ---------------------------------------------------------------------------

@dataclass
class DatasetItem:
    samples: np.ndarray          # standardized, fed to the classifier
    raw: np.ndarray              # pre-standardization values
    label: int                   # 1 = original, 0 = surrogate
    pair_id: int
    split: str | None = None


@dataclass
class LabeledDataset:
    items: list
    L: int
    seeds: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.items)

    @property
    def n_pairs(self) -> int:
        return len({it.pair_id for it in self.items})

    def subset(self, split: str) -> list:
        return [it for it in self.items if it.split == split]

    def arrays(self, split: str | None = None) -> tuple:
        """(X, y) matrices for a split (or the whole dataset)."""
        items = self.items if split is None else self.subset(split)
        if not items:
            return np.empty((0, self.L)), np.empty(0, dtype=int)
        X = np.stack([it.samples for it in items])
        y = np.array([it.label for it in items], dtype=int)
        return X, y


def pair_surrogates(originals, config: SurrogateConfig) -> list:
    """One surrogate per original, on independent per-pair seed streams."""
    results = []
    for pid, orig in enumerate(originals):
        pair_config = replace(config, seed=derived_seed(config.seed, pid))
        try:
            results.append(make_surrogate(orig, pair_config))
        except Exception as exc:
            raise RuntimeError(
                f"surrogate generation failed for pair {pid}: {exc}"
            ) from exc
    return results


def build_dataset(originals, config: SurrogateConfig,
                  surrogates=None) -> LabeledDataset:
    """Pair every original with its surrogate and standardize both.

    ``surrogates`` may carry precomputed SurrogateResults (e.g. from the
    surrogate pipeline stage); otherwise they are generated here with
    per-pair seeds derived from ``config.seed``.  Standardization happens
    after surrogate generation, so it cannot disturb the spectral and
    distribution constraints the surrogates encode.
    """
    originals = list(originals)
    if not originals:
        raise LengthError("need at least one original realization")
    lengths = {len(o) for o in originals}
    if len(lengths) != 1:
        raise LengthError(f"originals have mixed lengths: {sorted(lengths)}")
    L = lengths.pop()

    if surrogates is None:
        surrogates = pair_surrogates(originals, config)
    elif len(surrogates) != len(originals):
        raise LengthError("surrogate count does not match original count")

    items = []
    for pid, (orig, surr) in enumerate(zip(originals, surrogates)):
        surr_series = surr.surrogate if hasattr(surr, "surrogate") else surr
        items.append(DatasetItem(
            samples=standardize(orig).samples,
            raw=orig.samples.copy(),
            label=LABEL_ORIGINAL,
            pair_id=pid,
        ))
        items.append(DatasetItem(
            samples=standardize(surr_series).samples,
            raw=as_samples(surr_series).copy(),
            label=LABEL_SURROGATE,
            pair_id=pid,
        ))
    return LabeledDataset(items=items, L=L,
                          seeds={"surrogate": config.seed})


def split_dataset(dataset: LabeledDataset, train_frac: float = 0.75,
                  val_frac_of_train: float = 0.30, seed: int = 0) -> LabeledDataset:
    """Assign whole pairs to train/validation/test.

    Test and validation sizes are floored; the remainder stays in train.
    With 1000 pairs and the default fractions: 250 test, 225 validation,
    525 train.
    """
    if not 0.0 < train_frac < 1.0:
        raise ParameterError(f"train fraction must be in (0, 1), got {train_frac}")
    if not 0.0 <= val_frac_of_train < 1.0:
        raise ParameterError(
            f"validation fraction must be in [0, 1), got {val_frac_of_train}"
        )
    pair_ids = sorted({it.pair_id for it in dataset.items})
    n_pairs = len(pair_ids)
    if n_pairs < 3:
        raise SplitError(f"need at least 3 pairs to split, got {n_pairs}")

    # The 1e-9 nudge keeps exact fractions exact (0.30 * 750 must be 225
    # pairs, not 224) despite binary rounding of the fractions themselves.
    n_test = int(np.floor((1.0 - train_frac) * n_pairs + 1e-9))
    pool = n_pairs - n_test
    n_val = int(np.floor(val_frac_of_train * pool + 1e-9))

    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    order = rng.permutation(n_pairs)
    assignment = {}
    for rank, idx in enumerate(order):
        if rank < n_test:
            tag = "test"
        elif rank < n_test + n_val:
            tag = "validation"
        else:
            tag = "train"
        assignment[pair_ids[idx]] = tag

    items = [replace(it, split=assignment[it.pair_id]) for it in dataset.items]
    seeds = dict(dataset.seeds)
    seeds["split"] = seed
    return LabeledDataset(items=items, L=dataset.L, seeds=seeds)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_dataset(path, dataset: LabeledDataset, extra_meta: dict | None = None) -> None:
    """CSV with columns [pair_id, label, split, s_0 .. s_{L-1}] + sidecar."""
    path = Path(path)
    header = ["pair_id", "label", "split"] + [f"s_{i}" for i in range(dataset.L)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for it in dataset.items:
            writer.writerow([it.pair_id, it.label, it.split or ""]
                            + [f"{v:.17g}" for v in it.samples])
    meta = {"L": dataset.L, "N": dataset.n_pairs, "seeds": dataset.seeds}
    if extra_meta:
        meta.update(extra_meta)
    sidecar = path.with_name(path.stem + ".meta.json")
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> LabeledDataset:
    """Read a dataset CSV written by ``save_dataset``.

    Raw (pre-standardization) values are not stored on disk; loaded items
    carry the standardized samples in both slots.
    """
    path = Path(path)
    items = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise LengthError(f"{path} is empty")
        L = len(header) - 3
        for row in reader:
            if not row:
                continue
            samples = np.array([float(v) for v in row[3:]])
            items.append(DatasetItem(
                samples=samples,
                raw=samples.copy(),
                label=int(row[1]),
                pair_id=int(row[0]),
                split=row[2] or None,
            ))
    if not items:
        raise LengthError(f"{path} contains no items")
    seeds = {}
    sidecar = path.with_name(path.stem + ".meta.json")
    if sidecar.exists():
        with open(sidecar) as fh:
            seeds = json.load(fh).get("seeds", {})
    return LabeledDataset(items=items, L=L, seeds=seeds)
