"""Config-driven Monte Carlo harness for the capacity and estimation sweeps.

Every trial draws from its own Philox stream keyed by ``(seed, trial)``, and
all sweep points of a trial reuse that stream, so curves are compared on
common random numbers. Trials run on a thread pool and results are
aggregated in trial order, which keeps CSV output byte-identical for any
worker count.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .capacity import equipower_rate, pswf_capacity_bound, waterfill_capacity, wavelength
from .channel import (ArrayGeometry, ChannelSpec, dictionary_factors, kl_sides,
                      segmented_factors)
from .estimators import (ESTIMATOR_NAMES, PilotChannel, PilotDesign, PswfCeConfig, amp_estimate,
                         mmse_estimate, nmse, pswf_ce, random_design)

log = logging.getLogger(__name__)

KINDS = ("hmimo-saturation", "xlmimo-saturation", "ce-snr-sweep", "ce-pilot-sweep")
THREADS_ENV = "PSWFMIMO_THREADS"
SATURATION_COLUMNS = ("sweep_value", "scheme", "mean_norm_capacity", "std", "trials", "pswf_bound")
ESTIMATION_COLUMNS = ("sweep_value", "estimator", "mean_nmse_db", "std_db", "trials")


class ConfigError(ValueError):
    """Experiment configuration is malformed."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run.

    ``sweep`` holds antenna densities ``lambda/delta`` (hmimo), apertures in
    meters (xlmimo), SNRs in dB (ce-snr-sweep) or pilot counts
    (ce-pilot-sweep). ``snr_db`` is the fixed SNR for the other kinds.
    """

    kind: str
    sweep: tuple
    trials: int = 50
    seed: int = 0
    snr_db: float = 10.0
    freq_hz: float = 3.5e9
    gamma: float = 0.05
    support_t: tuple = (-0.15, 0.15)
    support_r: tuple = (-0.15, 0.15)
    grid_k: int = 1024
    aperture: float = 0.5
    n_elems: int | None = None
    n_pilots: int = 40
    eps: float = 0.1
    estimators: tuple = ESTIMATOR_NAMES
    output: str = "results.csv"
    svg: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        # YAML 1.1 reads "3.5e9" as a string, so coerce numerics explicitly
        casts = {"trials": int, "seed": int, "grid_k": int, "n_pilots": int, "snr_db": float,
                 "freq_hz": float, "gamma": float, "aperture": float, "eps": float}
        try:
            for name, cast in casts.items():
                object.__setattr__(self, name, cast(getattr(self, name)))
            if self.n_elems is not None:
                object.__setattr__(self, "n_elems", int(self.n_elems))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad numeric config value: {exc}") from exc
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        sweep = tuple(float(v) for v in np.atleast_1d(self.sweep))
        if not sweep:
            raise ConfigError("sweep must be nonempty")
        if self.kind == "ce-pilot-sweep":
            sweep = tuple(int(v) for v in sweep)
        object.__setattr__(self, "sweep", sweep)
        for name in ("support_t", "support_r"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if isinstance(self.estimators, str):
            object.__setattr__(self, "estimators", (self.estimators,))
        est = tuple(self.estimators)
        unknown = [e for e in est if e not in ESTIMATOR_NAMES]
        if unknown:
            raise ConfigError(f"unknown estimator(s) {unknown}; valid names: {', '.join(ESTIMATOR_NAMES)}")
        if not est:
            raise ConfigError("no estimators selected")
        object.__setattr__(self, "estimators", est)

    @property
    def wavelength(self) -> float:
        return wavelength(self.freq_hz)

    @property
    def snr(self) -> float:
        return 10 ** (self.snr_db / 10)

    def channel_spec(self) -> ChannelSpec:
        return ChannelSpec(self.support_t, self.support_r, self.gamma, self.gamma,
                           grid_k=self.grid_k)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a YAML mapping of ``ExperimentConfig`` fields; ``None`` overrides are ignored."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class ResultTable:
    columns: tuple
    rows: list = field(default_factory=list)

    def column(self, name: str, **match) -> np.ndarray:
        i = self.columns.index(name)
        keys = [(self.columns.index(k), v) for k, v in match.items()]
        return np.array([r[i] for r in self.rows if all(r[j] == v for j, v in keys)])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(table: ResultTable, path) -> None:
    atomic_write_text(path, table.to_csv_text())


def trial_generator(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial,))))


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def _map_trials(fn, trials: int, threads: int | None) -> np.ndarray:
    n = resolve_threads(threads)
    if n == 1:
        out = [fn(t) for t in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            out = list(pool.map(fn, range(trials)))
    return np.stack(out)  # (trials, sweep, scheme)


def _geometry(cfg: ExperimentConfig, aperture: float, spacing: float) -> ArrayGeometry:
    lam = cfg.wavelength
    if cfg.n_elems is not None and cfg.kind.startswith("ce-"):
        return ArrayGeometry(cfg.n_elems, spacing, spacing, lam)
    geom = ArrayGeometry.from_aperture(aperture, spacing, lam)
    mismatch = abs(geom.aperture - aperture)
    if mismatch > 1e-12:
        log.debug("aperture %.4g m realized as %d x %.4g m (mismatch %.3g m)",
                  aperture, geom.n_elems, spacing, mismatch)
    return geom


# capacity sweeps ----------------------------------------------------------

SCHEMES = ("waterfill", "equipower")


def _saturation_geometries(cfg: ExperimentConfig) -> list[ArrayGeometry]:
    lam = cfg.wavelength
    if cfg.kind == "hmimo-saturation":
        return [_geometry(cfg, cfg.aperture, lam / d) for d in cfg.sweep]
    return [_geometry(cfg, L, lam / 2) for L in cfg.sweep]


def _run_saturation(cfg: ExperimentConfig, threads: int | None) -> ResultTable:
    spec = cfg.channel_spec()
    geoms = _saturation_geometries(cfg)
    factors = [segmented_factors(spec, g, g) for g in geoms]
    side_r, side_t = kl_sides(spec)
    shape = (len(side_r.eigenvalues), len(side_t.eigenvalues))
    norm = math.log1p(cfg.snr)

    def trial(t: int) -> np.ndarray:
        rng = trial_generator(cfg.seed, t)
        g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
        out = np.empty((len(geoms), len(SCHEMES)))
        for k, f in enumerate(factors):
            h = f.channel(g)
            sv = np.linalg.svd(h, compute_uv=False)
            out[k, 0] = waterfill_capacity(sv, cfg.snr).capacity_nats / norm
            out[k, 1] = equipower_rate(h, cfg.snr) / norm
        return out

    values = _map_trials(trial, cfg.trials, threads)
    table = ResultTable(SATURATION_COLUMNS)
    for k, (sweep, geom) in enumerate(zip(cfg.sweep, geoms)):
        # nominal aperture, so rounding N does not leak into the bound
        aperture = cfg.aperture if cfg.kind == "hmimo-saturation" else sweep
        bound = pswf_capacity_bound(spec.support_t, cfg.gamma, aperture / cfg.wavelength,
                                    cfg.snr) / norm
        for j, scheme in enumerate(SCHEMES):
            v = values[:, k, j]
            table.rows.append((float(sweep), scheme, float(np.mean(v)), float(np.std(v)),
                               cfg.trials, float(bound)))
    return table


def run_hmimo_saturation(cfg: ExperimentConfig, threads: int | None = None) -> ResultTable:
    """Normalized capacity against antenna density ``lambda/delta`` with ``delta`` = spacing."""
    if cfg.kind != "hmimo-saturation":
        raise ConfigError(f"expected an hmimo-saturation config, got {cfg.kind}")
    return _run_saturation(cfg, threads)


def run_xlmimo_saturation(cfg: ExperimentConfig, threads: int | None = None) -> ResultTable:
    """Normalized capacity against aperture at half-wavelength spacing."""
    if cfg.kind != "xlmimo-saturation":
        raise ConfigError(f"expected an xlmimo-saturation config, got {cfg.kind}")
    return _run_saturation(cfg, threads)


def fit_slope(x, y, lo: float, hi: float) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` over ``lo <= x <= hi``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    sel = (x >= lo - 1e-12) & (x <= hi + 1e-12)
    if np.count_nonzero(sel) < 2:
        raise ValueError(f"need two points in [{lo}, {hi}]")
    slope, intercept = np.polyfit(x[sel], y[sel], 1)
    return float(slope), float(intercept)


def saturation_knee(x, y, rise=(0.2, 1.0), plateau=(2.5, 4.0)) -> float:
    """Abscissa where the small-``x`` linear fit reaches the plateau level."""
    slope, intercept = fit_slope(x, y, *rise)
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    sel = (x >= plateau[0] - 1e-12) & (x <= plateau[1] + 1e-12)
    level = float(np.mean(y[sel]))
    return (level - intercept) / slope


# estimation sweeps --------------------------------------------------------

@dataclass(frozen=True)
class _CeSetup:
    n_t: int
    n_r: int
    n_modes: tuple
    factors: object
    covariance: np.ndarray
    true_bandwidth: float
    spacing_wavelengths: float


def _ce_setup(cfg: ExperimentConfig) -> _CeSetup:
    spec = cfg.channel_spec()
    lam = cfg.wavelength
    tx = _geometry(cfg, cfg.aperture, lam / 2)
    factors = dictionary_factors(spec, tx, tx)
    side_r, side_t = kl_sides(spec)
    band = max(spec.support_t[1] - spec.support_t[0], spec.support_r[1] - spec.support_r[0])
    if abs(spec.support_t[0] + spec.support_t[1]) > 1e-12 or abs(spec.support_r[0] + spec.support_r[1]) > 1e-12:
        log.warning("DPSS pilots assume a band centered at zero; supports are off-center")
    return _CeSetup(tx.n_elems, tx.n_elems, (len(side_r.eigenvalues), len(side_t.eigenvalues)),
                    factors, factors.covariance(), band, tx.spacing_wavelengths)


def _run_estimators(cfg: ExperimentConfig, setup: _CeSetup, h, noise, pilots: PilotDesign,
                    n_pilots: int, snr: float, rng: np.random.Generator) -> list[float]:
    noise_var = 1.0 / snr
    ce = PswfCeConfig(setup.n_t, setup.n_r, n_pilots, snr, eps=cfg.eps,
                      spacing_wavelengths=setup.spacing_wavelengths)
    rand = PilotDesign(pilots.precoders[:n_pilots], pilots.combiners[:n_pilots])
    out = []
    for name in cfg.estimators:
        access = PilotChannel(h, 1.0, noise_var, noise)
        if name == "randcomb-mmse":
            est = mmse_estimate(access(rand), setup.covariance)
        elif name == "randcomb-amp":
            est = amp_estimate(access(rand))
        elif name == "bwest-pswf":
            step1 = PilotDesign(rand.precoders[:ce.step1], rand.combiners[:ce.step1])
            est = pswf_ce(access, ce, rng, step1_design=step1)
        elif name == "pswf-mmse-noprior":
            est = pswf_ce(access, ce, rng, bandwidth=setup.true_bandwidth)
        else:
            est = pswf_ce(access, ce, rng, bandwidth=setup.true_bandwidth,
                          prior_cov=setup.covariance)
        out.append(nmse(h, est.h_hat))
    return out


def _ce_points(cfg: ExperimentConfig):
    if cfg.kind == "ce-snr-sweep":
        return [(cfg.n_pilots, 10 ** (s / 10)) for s in cfg.sweep]
    return [(int(n), cfg.snr) for n in cfg.sweep]


def _run_ce(cfg: ExperimentConfig, threads: int | None) -> ResultTable:
    setup = _ce_setup(cfg)
    points = _ce_points(cfg)
    max_pilots = max(n for n, _ in points)
    if min(n for n, _ in points) < 2:
        raise ConfigError("need at least two pilots")

    def trial(t: int) -> np.ndarray:
        rng = trial_generator(cfg.seed, t)
        g = (rng.standard_normal(setup.n_modes) + 1j * rng.standard_normal(setup.n_modes)) / math.sqrt(2)
        h = setup.factors.channel(g)
        noise = (rng.standard_normal(max_pilots) + 1j * rng.standard_normal(max_pilots)) / math.sqrt(2)
        pilots = random_design(rng, max_pilots, setup.n_t, setup.n_r)
        out = np.empty((len(points), len(cfg.estimators)))
        for k, (n_p, snr) in enumerate(points):
            # pairing randomness (if any) restarts per point so points stay comparable
            sub = np.random.Generator(np.random.Philox(
                np.random.SeedSequence(cfg.seed, spawn_key=(t, 1))))
            out[k] = _run_estimators(cfg, setup, h, noise, pilots, n_p, snr, sub)
        return out

    values = _map_trials(trial, cfg.trials, threads)
    table = ResultTable(ESTIMATION_COLUMNS)
    for k, sweep in enumerate(cfg.sweep):
        for j, name in enumerate(cfg.estimators):
            v = values[:, k, j]
            db = 10 * np.log10(v)
            table.rows.append((float(sweep) if cfg.kind == "ce-snr-sweep" else int(sweep), name,
                               float(10 * np.log10(np.mean(v))), float(np.std(db)), cfg.trials))
    return table


def run_ce_snr_sweep(cfg: ExperimentConfig, threads: int | None = None) -> ResultTable:
    """Mean NMSE (dB) of the selected estimators against SNR at fixed pilot count."""
    if cfg.kind != "ce-snr-sweep":
        raise ConfigError(f"expected a ce-snr-sweep config, got {cfg.kind}")
    return _run_ce(cfg, threads)


def run_ce_pilot_sweep(cfg: ExperimentConfig, threads: int | None = None) -> ResultTable:
    """Mean NMSE (dB) of the selected estimators against pilot count at fixed SNR."""
    if cfg.kind != "ce-pilot-sweep":
        raise ConfigError(f"expected a ce-pilot-sweep config, got {cfg.kind}")
    return _run_ce(cfg, threads)


RUNNERS = {
    "hmimo-saturation": run_hmimo_saturation,
    "xlmimo-saturation": run_xlmimo_saturation,
    "ce-snr-sweep": run_ce_snr_sweep,
    "ce-pilot-sweep": run_ce_pilot_sweep,
}


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ResultTable:
    return RUNNERS[cfg.kind](cfg, threads)


def write_svg(table: ResultTable, cfg: ExperimentConfig, path) -> None:
    """Line plot of the table; needs matplotlib."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    group, value, err = table.columns[1], table.columns[2], table.columns[3]
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in dict.fromkeys(r[1] for r in table.rows):
        x = table.column("sweep_value", **{group: name})
        ax.errorbar(x, table.column(value, **{group: name}), yerr=table.column(err, **{group: name}),
                    label=name, capsize=2)
    if "pswf_bound" in table.columns:
        x = table.column("sweep_value", scheme=SCHEMES[0])
        ax.plot(x, table.column("pswf_bound", scheme=SCHEMES[0]), "k--", label="PSWF bound")
    if cfg.kind == "hmimo-saturation":
        ax.set_xscale("log", base=2)
    ax.set_xlabel({"hmimo-saturation": "antenna density lambda/delta",
                   "xlmimo-saturation": "aperture L [m]",
                   "ce-snr-sweep": "SNR [dB]",
                   "ce-pilot-sweep": "pilots N_P"}[cfg.kind])
    ax.set_ylabel(value)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_text(path, buf.getvalue())


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
