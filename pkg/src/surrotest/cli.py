"""Command-line pipeline: generate -> surrogate -> dataset -> train -> report.

Configuration precedence is flag > config file > default.  A frozen copy of
the fully resolved configuration is written into every output directory, and
re-running from that frozen file reproduces every artifact byte for byte.
One master seed derives all stage seeds (see ``seeding``), so a single
integer pins a whole run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import dynsys, rnn, stats
from .dataset import (FilterSpec, build_dataset, butterworth_lowpass,
                      load_dataset, load_series, pair_surrogates,
                      save_dataset, split_dataset)
from .errors import ParameterError, SurrotestError
from .seeding import stage_seed
from .spectral import SurrogateConfig

OUTPUT_ROOT_ENV = "SURROTEST_OUT"

FROZEN_CONFIG = "config.frozen.json"


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Fully resolved settings for one run; validated before any work."""

    system: str = "logistic"
    input: str | None = None          # record file for system == "file"
    input_format: str = "column"
    L: int = 32
    N: int = 1000
    mode: str | None = None
    alpha: float = 0.2                # AR(1) coefficient, system == "ar1"
    surrogate_algorithm: str = "iaaft"
    surrogate_max_iter: int = 100
    surrogate_tolerance: float = 1e-8
    filter_order: int | None = None
    filter_cutoff_hz: float | None = None
    filter_fs_hz: float | None = None
    hidden_size: int = 10
    epochs: int = 400
    learning_rate: float = 1e-4
    batch_size: int = 16
    clip_norm: float | None = 5.0
    train_frac: float = 0.75
    val_frac_of_train: float = 0.30
    master_seed: int = 0
    seed_generation: int | None = None
    seed_surrogate: int | None = None
    seed_split: int | None = None
    seed_init: int | None = None
    seed_shuffle: int | None = None
    out: str | None = None

    def resolve_seeds(self) -> None:
        for stage in ("generation", "surrogate", "split", "init", "shuffle"):
            key = f"seed_{stage}"
            if getattr(self, key) is None:
                setattr(self, key, stage_seed(self.master_seed, stage))

    def validate(self) -> None:
        known = dynsys.SYSTEMS + ("file",)
        if self.system not in known:
            raise ParameterError(
                f"unknown system {self.system!r}; expected one of {known}")
        if self.system == "file" and not self.input:
            raise ParameterError("system 'file' requires --input")
        if self.L < 8:
            raise ParameterError(f"L must be at least 8, got {self.L}")
        if self.N < 1:
            raise ParameterError(f"N must be at least 1, got {self.N}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be nonnegative, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ParameterError("learning rate must be positive")
        if self.batch_size < 1:
            raise ParameterError("batch size must be at least 1")
        if self.hidden_size < 1:
            raise ParameterError("hidden size must be at least 1")
        # Constructors validate their own ranges.
        self.surrogate_config()
        self.filter_spec()
        if self.system == "ar1":
            dynsys.NoiseParams(self.alpha)

    def surrogate_config(self) -> SurrogateConfig:
        return SurrogateConfig(
            algorithm=self.surrogate_algorithm,
            max_iter=self.surrogate_max_iter,
            tolerance=self.surrogate_tolerance,
            seed=self.seed_surrogate if self.seed_surrogate is not None else 0,
        )

    def filter_spec(self) -> FilterSpec | None:
        given = [self.filter_cutoff_hz, self.filter_fs_hz]
        if all(v is None for v in given):
            return None
        if any(v is None for v in given):
            raise ParameterError(
                "filter needs both filter_cutoff_hz and filter_fs_hz")
        return FilterSpec(cutoff_hz=self.filter_cutoff_hz,
                          sampling_rate_hz=self.filter_fs_hz,
                          order=self.filter_order or 4)

    def outdir(self) -> Path:
        if self.out:
            return Path(self.out)
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "surrotest-runs"))
        return root / f"{self.system}-L{self.L}-H{self.hidden_size}-s{self.master_seed}"


_CONFIG_FIELDS = {f.name for f in fields(RunConfig)}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, and command-line flags (flags win)."""
    values = {}
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path) as fh:
            file_values = json.load(fh)
        unknown = set(file_values) - _CONFIG_FIELDS
        if unknown:
            raise ParameterError(
                f"unknown config keys in {config_path}: {sorted(unknown)}")
        values.update(file_values)
    for name in _CONFIG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    cfg = RunConfig(**values)
    cfg.validate()
    cfg.resolve_seeds()
    return cfg


def write_frozen_config(cfg: RunConfig, outdir: Path) -> None:
    blob = asdict(cfg)
    blob["out"] = str(outdir)
    with open(outdir / FROZEN_CONFIG, "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _generate_realizations(cfg: RunConfig) -> list:
    if cfg.system == "file":
        record = load_series(cfg.input, fmt=cfg.input_format)
        spec = cfg.filter_spec()
        if spec is not None:
            record = butterworth_lowpass(record, spec)
        return dynsys.make_realizations(record, cfg.L, cfg.N,
                                        mode=cfg.mode or "windowed",
                                        seed=cfg.seed_generation)
    params = dynsys.NoiseParams(cfg.alpha) if cfg.system == "ar1" else None
    return dynsys.make_realizations(cfg.system, cfg.L, cfg.N, mode=cfg.mode,
                                    seed=cfg.seed_generation, params=params)


def cmd_generate(cfg: RunConfig) -> Path:
    outdir = cfg.outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    realizations = _generate_realizations(cfg)
    path = outdir / "realizations.csv"
    dynsys.save_realizations(path, realizations,
                             extra_meta={"master_seed": cfg.master_seed})
    write_frozen_config(cfg, outdir)
    return path


def cmd_surrogate(cfg: RunConfig, input_path=None) -> Path:
    outdir = cfg.outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    source = Path(input_path) if input_path else outdir / "realizations.csv"
    originals, _ = dynsys.load_realizations(source)
    results = pair_surrogates(originals, cfg.surrogate_config())
    surr_path = outdir / "surrogates.csv"
    dynsys.save_realizations(
        surr_path, [r.surrogate for r in results],
        extra_meta={"algorithm": cfg.surrogate_algorithm,
                    "source": source.name})
    summary = {
        "algorithm": cfg.surrogate_algorithm,
        "max_iter": cfg.surrogate_max_iter,
        "tolerance": cfg.surrogate_tolerance,
        "seed": cfg.seed_surrogate,
        "pairs": [
            {"pair_id": i,
             "iterations": r.iterations,
             "converged": r.converged,
             "discrepancy": min(r.discrepancy_trace)}
            for i, r in enumerate(results)
        ],
    }
    with open(outdir / "surrogate_report.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_frozen_config(cfg, outdir)
    return surr_path


def _assemble_dataset(cfg: RunConfig, originals, surrogates=None):
    # For records (system "file") the filter ran at ingestion, before
    # windowing.  For prebuilt realization CSVs it applies per realization
    # here - and must precede surrogate generation, or original and
    # surrogate would no longer share a value multiset, so any precomputed
    # surrogates are discarded in that case.
    spec = cfg.filter_spec()
    if spec is not None and cfg.system != "file":
        originals = [butterworth_lowpass(o, spec) for o in originals]
        surrogates = None
    ds = build_dataset(originals, cfg.surrogate_config(), surrogates=surrogates)
    return split_dataset(ds, train_frac=cfg.train_frac,
                         val_frac_of_train=cfg.val_frac_of_train,
                         seed=cfg.seed_split)


def cmd_dataset(cfg: RunConfig, input_path=None) -> Path:
    outdir = cfg.outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    source = Path(input_path) if input_path else outdir / "realizations.csv"
    originals, _ = dynsys.load_realizations(source)
    ds = _assemble_dataset(cfg, originals)
    path = outdir / "dataset.csv"
    save_dataset(path, ds, extra_meta={
        "surrogate": {"algorithm": cfg.surrogate_algorithm,
                      "max_iter": cfg.surrogate_max_iter,
                      "tolerance": cfg.surrogate_tolerance,
                      "seed": cfg.seed_surrogate},
        "filter": asdict(cfg.filter_spec()) if cfg.filter_spec() else None,
        "master_seed": cfg.master_seed,
    })
    write_frozen_config(cfg, outdir)
    return path


def cmd_train(cfg: RunConfig, input_path=None) -> Path:
    outdir = cfg.outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    source = Path(input_path) if input_path else outdir / "dataset.csv"
    ds = load_dataset(source)
    train_cfg = rnn.TrainConfig(hidden_size=cfg.hidden_size,
                                lr=cfg.learning_rate,
                                batch_size=cfg.batch_size,
                                clip_norm=cfg.clip_norm,
                                shuffle_seed=cfg.seed_shuffle)
    snapshots, report = rnn.train(cfg.seed_init, ds, cfg.epochs, train_cfg)
    rnn.save_model(outdir / "model.json", snapshots[-1])
    if report.representative_epoch is not None:
        rnn.save_model(outdir / "model_representative.json",
                       snapshots[report.representative_epoch])
    report_path = outdir / "train_report.csv"
    rnn.save_report(report_path, report)
    write_frozen_config(cfg, outdir)
    return report_path


def verdict_from_report(report: rnn.TrainReport, alpha: float = 0.05) -> dict:
    if report.representative_epoch is None:
        epoch, acc = stats.representative_accuracy(report)
    else:
        epoch, acc = report.representative_epoch, report.representative_accuracy
    n = report.n_test_items
    if n < 1:
        raise ParameterError("report does not record the test item count")
    successes = int(np.floor(acc * n + 0.5))
    result = stats.binomial_test(successes, n, p0=0.5, alpha=alpha)
    return {
        "representative_epoch": epoch,
        "representative_accuracy": acc,
        "test_items": n,
        "successes": successes,
        "null_proportion": 0.5,
        "p_value": result.p_value,
        "alpha": alpha,
        "reject_random_guess": result.reject,
    }


def cmd_report(cfg: RunConfig, input_path=None) -> Path:
    outdir = cfg.outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    source = Path(input_path) if input_path else outdir / "train_report.csv"
    report = rnn.load_report(source)
    verdict = verdict_from_report(report)
    line = json.dumps(verdict, sort_keys=True)
    with open(outdir / "verdict.json", "w") as fh:
        fh.write(line + "\n")
    print(line)
    write_frozen_config(cfg, outdir)
    return outdir / "verdict.json"


def cmd_pipeline(cfg: RunConfig) -> Path:
    """Run every stage in order, aborting with the stage name on failure."""
    outdir = cfg.outdir()
    outdir.mkdir(parents=True, exist_ok=True)
    write_frozen_config(cfg, outdir)

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            raise RuntimeError(f"pipeline failed at stage '{name}': {exc}") from exc

    realizations_path = stage("generate", cmd_generate, cfg)
    stage("surrogate", cmd_surrogate, cfg, realizations_path)

    def assemble():
        originals, _ = dynsys.load_realizations(realizations_path)
        surrogates, _ = dynsys.load_realizations(outdir / "surrogates.csv")
        ds = _assemble_dataset(cfg, originals, surrogates=surrogates)
        save_dataset(outdir / "dataset.csv", ds, extra_meta={
            "surrogate": {"algorithm": cfg.surrogate_algorithm,
                          "max_iter": cfg.surrogate_max_iter,
                          "tolerance": cfg.surrogate_tolerance,
                          "seed": cfg.seed_surrogate},
            "filter": asdict(cfg.filter_spec()) if cfg.filter_spec() else None,
            "master_seed": cfg.master_seed,
        })
        return outdir / "dataset.csv"

    dataset_path = stage("dataset", assemble)
    report_path = stage("train", cmd_train, cfg, dataset_path)
    return stage("report", cmd_report, cfg, report_path)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--system", choices=dynsys.SYSTEMS + ("file",))
    parser.add_argument("--input", help="record file for --system file")
    parser.add_argument("--input-format", dest="input_format",
                        choices=("column", "row"))
    parser.add_argument("--L", type=int, help="realization length")
    parser.add_argument("--N", type=int, help="realization count")
    parser.add_argument("--mode", choices=("independent", "windowed"))
    parser.add_argument("--alpha", type=float, help="AR(1) coefficient")
    parser.add_argument("--surrogate-alg", dest="surrogate_algorithm",
                        choices=SurrogateConfig.ALGORITHMS)
    parser.add_argument("--max-iter", dest="surrogate_max_iter", type=int)
    parser.add_argument("--tolerance", dest="surrogate_tolerance", type=float)
    parser.add_argument("--filter-order", dest="filter_order", type=int)
    parser.add_argument("--filter-cutoff-hz", dest="filter_cutoff_hz", type=float)
    parser.add_argument("--filter-fs-hz", dest="filter_fs_hz", type=float)
    parser.add_argument("--hidden-size", "--H", dest="hidden_size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", dest="learning_rate", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--clip-norm", dest="clip_norm", type=float)
    parser.add_argument("--seed", dest="master_seed", type=int,
                        help="master seed; stage seeds derive from it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surrotest",
        description="Detect dynamical nonlinearity in short time series by "
                    "training a recurrent classifier against constrained "
                    "surrogates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "generate": "generate realizations from a system or record",
        "surrogate": "pair a realization CSV with surrogates",
        "dataset": "build a labeled, split dataset from realizations",
        "train": "train the recurrent classifier on a dataset CSV",
        "report": "summarize a training report and test against 0.5",
        "pipeline": "run generate/surrogate/dataset/train/report end to end",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in ("surrogate", "dataset", "train", "report"):
            p.add_argument("--from", dest="stage_input",
                           help="input artifact (defaults to the output "
                                "directory's own)")
    return parser


_DISPATCH = {
    "generate": lambda cfg, args: cmd_generate(cfg),
    "surrogate": lambda cfg, args: cmd_surrogate(cfg, args.stage_input),
    "dataset": lambda cfg, args: cmd_dataset(cfg, args.stage_input),
    "train": lambda cfg, args: cmd_train(cfg, args.stage_input),
    "report": lambda cfg, args: cmd_report(cfg, args.stage_input),
    "pipeline": lambda cfg, args: cmd_pipeline(cfg),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        _DISPATCH[args.command](cfg, args)
    except SurrotestError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError, ValueError) as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
