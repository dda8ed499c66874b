"""Command line runner for the experiment suites.

    liouville4 <suite> [--config cfg.json] [--seed S] [--out DIR] [--level L]
                       [--gamma G ...] [--cutoff N] [--samples K] [--threads T]

Exit status: 0 success, 2 invalid configuration, 3 numerical invariant
breach, 4 I/O failure. The default output directory is taken from the
BIHARMONIC_OUT environment variable.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import discrete, fields, io, liouville
from .haar import GridField
from .rng import SeededStream
from .spectral_core import (
    EIGHT_PI2,
    SpectralField,
    biharmonic_kernel,
    fractional_green_value,
    green_kernel,
)

log = logging.getLogger("liouville4")

SUITES = ("kernel-eval", "sample-field", "discrete-field", "liouville",
          "conformal-check", "convergence-report")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
OUT_ENV = "BIHARMONIC_OUT"
_DESK_LEVEL = 5
_DESK_CUTOFF = 64


class NumericalBreach(RuntimeError):
    """A deterministic invariant failed beyond its tolerance."""


@dataclass
class ExperimentConfig:
    experiment: str
    levels: tuple[int, int] = (3, 3)
    gammas: list[float] = field(default_factory=lambda: [1.0])
    cutoff: int | None = None
    samples: int = 200
    seed: int = 0
    out: str | None = None
    threads: int = 1
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        self.levels = tuple(int(v) for v in self.levels)
        if len(self.levels) == 1:
            self.levels = (self.levels[0], self.levels[0])
        self.gammas = [float(g) for g in self.gammas]
        if self.cutoff is None and self.levels:
            self.cutoff = 2 ** (max(self.levels) + 1)

    @property
    def level_range(self) -> range:
        return range(self.levels[0], self.levels[1] + 1)

    @property
    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or "out")

    def tolerance(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def canonical(self) -> dict:
        d = dataclasses.asdict(self)
        d["levels"] = list(self.levels)
        d.pop("out")
        d.pop("threads")  # no effect on outputs
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def validate(config: ExperimentConfig) -> list[str]:
    """All violated invariants; empty iff ``run`` would start."""
    out = []
    if config.experiment not in SUITES:
        out.append(f"unknown experiment {config.experiment!r}")
    if len(config.levels) != 2 or config.levels[0] < 1 or config.levels[1] < config.levels[0]:
        out.append("level range must satisfy 1 <= lo <= hi")
    elif config.cutoff is None or config.cutoff < 2 ** (config.levels[1] + 1):
        out.append("cutoff below Haar resolution")
    if config.samples < 1:
        out.append("sample count must be at least 1")
    if not config.gammas:
        out.append("gamma list is empty")
    if any(not math.isfinite(g) for g in config.gammas):
        out.append("gamma values must be finite")
    if config.threads < 1:
        out.append("threads must be at least 1")
    return out


def config_warnings(config: ExperimentConfig) -> list[str]:
    out = []
    if any(abs(g) >= liouville.L1_THRESHOLD for g in config.gammas):
        out.append("outside |gamma|<sqrt(8) convergence regime")
    elif any(abs(g) >= liouville.L2_THRESHOLD for g in config.gammas):
        out.append("|gamma| >= 2: second moments are unbounded")
    if config.levels and config.levels[-1] > _DESK_LEVEL:
        out.append(f"level above desk budget {_DESK_LEVEL}")
    if config.cutoff is not None and config.cutoff > _DESK_CUTOFF:
        out.append(f"cutoff above desk budget {_DESK_CUTOFF}")
    return out


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    version: str
    stages: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Writer:
    """Tracks written files and stamps rows with provenance."""

    def __init__(self, config: ExperimentConfig, manifest: RunManifest):
        self.dir = config.out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = config.digest()
        self.manifest = manifest
        self.stage = ""

    def _record(self, path: Path):
        self.manifest.outputs.append({"path": path.name, "sha256": _sha256(path)})

    def csv(self, name: str, header: list[str], rows) -> Path:
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header + ["stage", "config_hash"])
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r]
                           + [self.stage, self.hash])
        self._record(path)
        return path

    def jsonl(self, name: str, records) -> Path:
        path = self.dir / name
        with open(path, "w") as fh:
            for rec in records:
                rec = dict(rec, stage=self.stage, config_hash=self.hash)
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self._record(path)
        return path

    def binary(self, name: str, array, kind: str, **meta) -> Path:
        path = io.dump_array(self.dir / name, array, kind, config_hash=self.hash, **meta)
        self._record(path)
        return path


# ---------------------------------------------------------------------------
# suites


def _kernel_eval(cfg: ExperimentConfig, w: _Writer):
    rng = SeededStream(cfg.seed).generator("kernel-eval", "direction")
    direction = rng.normal(size=4)
    direction /= np.linalg.norm(direction)
    x = np.full(4, 0.3)
    rows = []
    for d in np.logspace(-3, -1, 21):
        y = x + d * direction
        rows.append((d, green_kernel(x, y) * d * d, biharmonic_kernel(x, y) + math.log(d)))
    vals = np.array([r[1:] for r in rows])
    if not np.all(np.isfinite(vals)):
        raise NumericalBreach("non-finite kernel value")
    w.csv("kernel_eval.csv", ["d", "green_times_d2", "k_plus_log_d"], rows)


def _sample_field(cfg: ExperimentConfig, w: _Writer):
    stream = SeededStream(cfg.seed)
    for lvl in cfg.level_range:
        cells = fields.sample_cell_averages(lvl, stream)
        w.binary(f"cells_l{lvl}.bhf", cells.values, "cell-averages", level=lvl, seed=cfg.seed)
        haar = fields.sample_haar_field(lvl, stream)
        w.binary(f"haar_noise_l{lvl}.bhf", haar.noise().values, "haar-noise", level=lvl, seed=cfg.seed)


def _discrete_field(cfg: ExperimentConfig, w: _Writer):
    stream = SeededStream(cfg.seed)
    tol = cfg.tolerance("green", 1e-9)
    records = []
    for lvl in cfg.level_range:
        h = discrete.sample_discrete_field(lvl, stream)
        w.binary(f"discrete_l{lvl}.bhf", h.values, "discrete-field", level=lvl, seed=cfg.seed)
        probe = GridField(lvl, stream.normals("probe", lvl, size=(2**lvl,) * 4))
        ref = discrete.discrete_green_apply(probe).values
        gaps = {}
        for method, max_level in (("neumann", 4), ("dense", 2)):
            if lvl <= max_level:
                gaps[method] = float(np.abs(discrete.discrete_green_apply(probe, method).values - ref).max())
        if any(g > tol for g in gaps.values()):
            raise NumericalBreach(f"discrete Green disagreement at level {lvl}: {gaps}")
        records.append({"level": lvl, "gibbs_log_density": discrete.gibbs_log_density(h),
                        "gibbs_mean": -(2 ** (4 * lvl) - 1) / 2, "green_gaps": gaps,
                        "site_variance": discrete.diagonal_variance(lvl),
                        "spectral_gap": discrete.spectral_gap(lvl)})
    w.jsonl("discrete_field.jsonl", records)


def _liouville(cfg: ExperimentConfig, w: _Writer):
    stream = SeededStream(cfg.seed)
    records = []
    for lvl in cfg.level_range:
        sampler = fields.CellAverageSampler(lvl)
        for g in cfg.gammas:
            semi = np.empty(cfg.samples)
            disc = np.empty(cfg.samples)
            for r in range(cfg.samples):
                rep = stream.replica(r)
                cells = sampler.sample(rep)[0]
                semi[r] = liouville.semi_discrete_measure(lvl, g, cells, strict=False).total_mass
                hd = discrete.sample_discrete_field(lvl, rep)
                disc[r] = liouville.discrete_measure(lvl, g, hd, strict=False).total_mass
            for name, vals in (("semi-discrete", semi), ("discrete", disc)):
                rep_ = liouville.MomentReport(f"E[mass] {name}", lvl, g, float(vals.mean()),
                                              float(vals.std(ddof=1) / math.sqrt(cfg.samples))
                                              if cfg.samples > 1 else float("nan"),
                                              cfg.samples, reference=1.0)
                records.append(json.loads(rep_.to_json()))
            if g < liouville.L2_THRESHOLD:
                records.append({"quantity": "E[Y^2] quadrature", "level": lvl, "gamma": g,
                                "estimate": liouville.second_moment_quadrature(lvl, g)})
        mu = liouville.sample_semi_discrete(lvl, cfg.gammas[0], stream.replica(0), strict=False)
        w.binary(f"measure_l{lvl}.bhf", mu.masses, "liouville-measure", level=lvl,
                 gamma=cfg.gammas[0], seed=cfg.seed)
    w.jsonl("liouville.jsonl", records)


def _conformal_check(cfg: ExperimentConfig, w: _Writer):
    phi = SpectralField.from_modes(1, {(1, 0, 0, 0): 0.05})
    weight = fields.ConformalWeight(phi)
    tests = [SpectralField.from_modes(1, {(0, 1, 0, 0): 0.5}),
             SpectralField.from_modes(1, {(1, 0, 0, 0): 0.5, (0, 0, 1, 0): 0.25j})]
    cutoff = weight.density.cutoff
    weighted = [weight.weighted(u) for u in tests]
    vals = fields.spectral_pairings(cutoff, SeededStream(cfg.seed), weighted + [weight.density], cfg.samples)
    shifted = vals[:, :-1] - np.outer(vals[:, -1] / weight.volume, [U.mean for U in weighted])
    records = []
    for i, u in enumerate(tests):
        ref = fields.conformal_kernel_form(weight, u, u)
        est = float(np.mean(shifted[:, i] ** 2))
        se = float(np.std(shifted[:, i] ** 2, ddof=1) / math.sqrt(cfg.samples)) if cfg.samples > 1 else float("nan")
        records.append({"test": i, "estimate": est, "stderr": se, "reference": ref,
                        "resolution_error": weight.resolution_error})
    w.jsonl("conformal_check.jsonl", records)


def _convergence_report(cfg: ExperimentConfig, w: _Writer):
    target = EIGHT_PI2 * fractional_green_value(3.0, np.zeros(4), np.zeros(4)).value
    rows = []
    prev = -np.inf
    for lvl in cfg.level_range:
        y2 = liouville.second_moment_quadrature(lvl, cfg.gammas[0]) if abs(cfg.gammas[0]) < 2 else float("nan")
        hs = fields.expected_negative_sobolev(lvl, 0.5)
        if hs < prev:
            raise NumericalBreach("negative Sobolev expectation decreased with the level")
        prev = hs
        rows.append((lvl, fields.cube_variance(lvl), discrete.diagonal_variance(lvl),
                     discrete.spectral_gap(lvl), y2, hs, hs / target))
    w.csv("convergence.csv", ["level", "cube_variance", "site_variance", "spectral_gap",
                              "second_moment", "neg_sobolev_mean", "neg_sobolev_ratio"], rows)


_SUITE_FUNCS = {
    "kernel-eval": _kernel_eval,
    "sample-field": _sample_field,
    "discrete-field": _discrete_field,
    "liouville": _liouville,
    "conformal-check": _conformal_check,
    "convergence-report": _convergence_report,
}


class ConfigError(ValueError):
    pass


def run(config: ExperimentConfig) -> RunManifest:
    """Execute the configured suite, write its outputs and ``manifest.json``."""
    problems = validate(config)
    if problems:
        raise ConfigError("; ".join(problems))
    manifest = RunManifest(config.canonical(), config.digest(), __version__,
                           warnings=config_warnings(config))
    for msg in manifest.warnings:
        log.warning(msg)
    writer = _Writer(config, manifest)
    writer.stage = config.experiment
    t0 = time.perf_counter()
    _SUITE_FUNCS[config.experiment](config, writer)
    manifest.stages[config.experiment] = round(time.perf_counter() - t0, 3)
    (writer.dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liouville4", description=__doc__.splitlines()[0])
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    p.add_argument("--threads", type=int)
    p.add_argument("--level", type=int, nargs="+", help="level, or lo hi")
    p.add_argument("--gamma", type=float, nargs="+")
    p.add_argument("--cutoff", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads,
                 "levels": args.level, "gammas": args.gamma, "cutoff": args.cutoff,
                 "samples": args.samples}
    try:
        if args.config is not None:
            cfg = ExperimentConfig.from_json(args.config, experiment=args.suite, **overrides)
        else:
            cfg = ExperimentConfig(args.suite, **{k: v for k, v in overrides.items() if v is not None})
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TypeError, ValueError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = validate(cfg)
    if problems:
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(cfg)
    except NumericalBreach as exc:
        print(f"error: numerical invariant breach: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps({"config_hash": manifest.config_hash, "outputs": manifest.outputs}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
