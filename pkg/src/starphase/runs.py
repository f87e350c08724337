"""Sweep orchestration: scenario resolution, table caching, command backends.

Each CLI subcommand maps to one function here returning plain rows, so the
whole pipeline is drivable from tests without touching the filesystem.
Baseline lengths are converted to per-arm transmittance, source intensities
resolved ("auto" optimizes per point), tables built through a disk cache
keyed by a scenario fingerprint.

Reported Fisher information is per emission time window: heralded sources
only deliver their conditional state when every heralding detector fired
(probability mu/(1+mu) per source), and non-heralded windows carry no phase
information.  Monte Carlo window counts N_t, by contrast, count usable
(post-heralding) windows per phase-shifter setting.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .closedform import (
    closed_form_virtual_table,
    compare_virtual_tables,
    two_click_amplitudes,
)
from .config import Config, SourceSpec
from .detection import (
    DetectionError,
    DetectorModel,
    OutcomeTable,
    StarlightModel,
    build_multi_source_table,
    build_virtual_table,
    _sector_amplitudes_dft,
)
from .estimation import (
    RAD_TO_UAS,
    average_angular_error,
    crb_angular_uncertainty,
    fisher_information,
)
from .sources import (
    ChannelModel,
    SourceModel,
    default_m_max,
    eta_from_baseline,
    optimize_mu,
)

AUTO_M_MAX_CAP = 60
AUTO_TAIL_TARGET = 1e-10


class TableCache:
    """Disk + memory cache of built outcome tables, keyed by scenario fingerprint."""

    def __init__(self, directory: Path | None):
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, OutcomeTable] = {}

    @staticmethod
    def fingerprint(key: dict) -> str:
        return hashlib.sha256(
            json.dumps(key, sort_keys=True).encode("utf-8")
        ).hexdigest()[:32]

    def get(self, key: dict) -> OutcomeTable | None:
        fp = self.fingerprint(key)
        if fp in self._memory:
            return self._memory[fp]
        if self.directory:
            path = self.directory / f"{fp}.json"
            if path.exists():
                table = OutcomeTable.loads(path.read_text(encoding="utf-8"))
                self._memory[fp] = table
                return table
        return None

    def put(self, key: dict, table: OutcomeTable) -> None:
        fp = self.fingerprint(key)
        self._memory[fp] = table
        if self.directory:
            path = self.directory / f"{fp}.json"
            tmp = path.with_suffix(".tmp")
            tmp.write_text(table.dumps(), encoding="utf-8")
            tmp.replace(path)


@dataclass(frozen=True)
class ScenarioPoint:
    """One fully resolved sweep point (table plus its provenance)."""

    table: OutcomeTable
    baseline_km: float
    eta: float
    spec: SourceSpec
    n_modes: int
    mu_used: float | None
    mu_boundary: bool
    m_max: int
    herald_rate: float
    xi: float
    dark_count: float


def eta_for_baseline(config: Config, baseline_km: float) -> float:
    return eta_from_baseline(
        ChannelModel(config.attenuation_db_per_km, baseline_km)
    )


def make_source(kind: str, mu: float | None, config: Config) -> SourceModel:
    if kind == "generic":
        return SourceModel("generic", pn=config.source_pn)
    if kind == "single-photon":
        return SourceModel("single-photon")
    return SourceModel(kind, mu=mu)


def herald_rate(kind: str, mu: float | None, n_sources: int) -> float:
    """Fraction of emission windows in which every heralding detector fired."""
    if kind != "heralded":
        return 1.0
    return (mu / (1.0 + mu)) ** n_sources


def resolve_m_max(source: SourceModel, eta: float, config: Config) -> int:
    if config.m_max != "auto":
        return int(config.m_max)
    return default_m_max(source, eta, AUTO_TAIL_TARGET, AUTO_M_MAX_CAP)


def _fisher_mu_objective(
    kind: str, eta: float, n_modes: int, config: Config
) -> Callable[[float], float]:
    star = StarlightModel(config.epsilon)

    def objective(mu: float) -> float:
        source = make_source(kind, mu, config)
        m_max = resolve_m_max(source, eta, config)
        try:
            table = build_multi_source_table(
                n_modes, source, eta, star, m_max,
                tail_ceiling=config.tail_ceiling, event_cap=config.event_cap,
            )
        except DetectionError:
            # truncation over the ceiling: infeasible intensity, score zero
            return 0.0
        rate = herald_rate(kind, mu, n_modes - 1)
        return rate * fisher_information(table, config.phi).fisher

    return objective


#: Coarser scan for the max-fisher strategy; each objective call builds a
#: full table, and golden-section refinement recovers the resolution.
FISHER_GRID_POINTS = 25


def resolve_mu(
    kind: str, eta: float, n_modes: int, config: Config
) -> tuple[float | None, bool]:
    """Source intensity for one sweep point: fixed, or optimized per strategy."""
    if kind in ("single-photon", "generic"):
        return None, False
    if config.mu != "auto":
        return float(config.mu), False
    objective = None
    grid_points = 81
    if config.mu_strategy == "max-fisher":
        objective = _fisher_mu_objective(kind, eta, n_modes, config)
        grid_points = FISHER_GRID_POINTS
    optimum = optimize_mu(
        kind, eta, config.mu_strategy, objective=objective, grid_points=grid_points
    )
    return optimum.mu, optimum.boundary


def build_point(
    config: Config,
    spec: SourceSpec,
    baseline_km: float,
    xi: float | None = None,
    dark_count: float | None = None,
    cache: TableCache | None = None,
) -> ScenarioPoint:
    """Resolve and build (or fetch) the outcome table for one sweep point."""
    n_modes = spec.n_modes or config.n_modes
    eta = eta_for_baseline(config, baseline_km)
    mu_used, boundary = resolve_mu(spec.kind, eta, n_modes, config)
    source = make_source(spec.kind, mu_used, config)
    m_max = resolve_m_max(source, eta, config)
    xi = config.xi if xi is None else xi
    dark_count = config.dark_count if dark_count is None else dark_count
    key = {
        "schema": 1,
        "kind": spec.kind,
        "mu": mu_used,
        "pn": list(config.source_pn) if spec.kind == "generic" else None,
        "eta": eta,
        "epsilon": config.epsilon,
        "n_modes": n_modes,
        "m_max": m_max,
        "xi": xi,
        "dark_count": dark_count,
    }
    table = cache.get(key) if cache else None
    if table is None:
        table = build_multi_source_table(
            n_modes,
            source,
            eta,
            StarlightModel(config.epsilon),
            m_max,
            DetectorModel(xi, dark_count),
            tail_ceiling=config.tail_ceiling,
            event_cap=config.event_cap,
            meta=key,
        )
        if cache:
            cache.put(key, table)
    rate = herald_rate(spec.kind, mu_used, n_modes - 1)
    return ScenarioPoint(
        table, baseline_km, eta, spec, n_modes, mu_used, boundary,
        m_max, rate, xi, dark_count,
    )


def _map_points(fn, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# fisher-sweep
# ---------------------------------------------------------------------------

FISHER_SWEEP_HEADER = (
    "L_km", "eta", "source_kind", "N", "mu_used", "fisher", "crb_delta_theta_uas",
)


@dataclass(frozen=True)
class _FisherTask:
    config: Config
    spec: SourceSpec
    baseline_km: float
    cache_dir: str | None


def _fisher_point(task: _FisherTask) -> list:
    cache = TableCache(task.cache_dir) if task.cache_dir else None
    point = build_point(task.config, task.spec, task.baseline_km, cache=cache)
    fisher = point.herald_rate * fisher_information(
        point.table, task.config.phi
    ).fisher
    crb = crb_angular_uncertainty(
        fisher,
        task.config.windows,
        task.config.wavelength_nm * 1e-9,
        task.baseline_km * 1e3,
    )
    return [
        task.baseline_km,
        point.eta,
        task.spec.kind,
        point.n_modes,
        math.nan if point.mu_used is None else point.mu_used,
        fisher,
        crb * RAD_TO_UAS,
    ]


def fisher_sweep(
    config: Config, cache_dir: Path | None = None, workers: int = 1
) -> list[list]:
    """Per-window Fisher information and angular CRB over the baseline grid."""
    tasks = [
        _FisherTask(config, spec, baseline, str(cache_dir) if cache_dir else None)
        for baseline in config.baselines_km
        for spec in config.sources
    ]
    return _map_points(_fisher_point, tasks, workers)


# ---------------------------------------------------------------------------
# mu-opt
# ---------------------------------------------------------------------------

MU_OPT_HEADER = ("L_km", "eta", "source_kind", "mu_star", "P1_at_star", "boundary")


def mu_opt(config: Config) -> list[list]:
    """Optimized source intensity per baseline for every tunable source."""
    rows = []
    for baseline in config.baselines_km:
        eta = eta_for_baseline(config, baseline)
        for spec in config.sources:
            if spec.kind not in ("coherent", "heralded"):
                continue
            n_modes = spec.n_modes or config.n_modes
            objective = None
            grid_points = 81
            if config.mu_strategy == "max-fisher":
                objective = _fisher_mu_objective(spec.kind, eta, n_modes, config)
                grid_points = FISHER_GRID_POINTS
            opt = optimize_mu(
                spec.kind, eta, config.mu_strategy,
                objective=objective, grid_points=grid_points,
            )
            source = make_source(spec.kind, opt.mu, config)
            pm = source.photon_numbers(eta, 1)
            rows.append(
                [baseline, eta, spec.kind, opt.mu, pm.p(1), int(opt.boundary)]
            )
    return rows


# ---------------------------------------------------------------------------
# mle-sim
# ---------------------------------------------------------------------------

MLE_SIM_HEADER = (
    "L_km", "eta", "source_kind", "N", "mu_used", "windows", "trials",
    "mean_abs_error_uas", "crb_uas", "ratio", "degenerate_trials", "seed",
)


@dataclass(frozen=True)
class _MleTask:
    config: Config
    baseline_km: float
    windows: int
    cache_dir: str | None


def _mle_point(task: _MleTask) -> tuple[list, dict]:
    config = task.config
    cache = TableCache(task.cache_dir) if task.cache_dir else None
    point = build_point(config, config.primary_source(), task.baseline_km, cache=cache)
    sweep = average_angular_error(
        point.table,
        config.wavelength_nm * 1e-9,
        task.baseline_km * 1e3,
        task.windows,
        config.trials,
        config.seed,
    )
    ratio = (
        sweep.mean_abs_error_rad / sweep.mean_crb_rad
        if math.isfinite(sweep.mean_crb_rad) and sweep.mean_crb_rad > 0
        else math.nan
    )
    row = [
        task.baseline_km,
        point.eta,
        point.spec.kind,
        point.n_modes,
        math.nan if point.mu_used is None else point.mu_used,
        task.windows,
        config.trials,
        sweep.mean_abs_error_uas,
        sweep.mean_crb_uas,
        ratio,
        sweep.degenerate_trials,
        config.seed,
    ]
    diag = {
        "baseline_km": task.baseline_km,
        "eta": point.eta,
        "source_kind": point.spec.kind,
        "n_modes": point.n_modes,
        "mu_used": point.mu_used,
        "m_max": point.m_max,
        "herald_rate": point.herald_rate,
        "windows": task.windows,
        "trials": config.trials,
        "seed": config.seed,
        "rng": "philox4x64",
        "window_accounting": "post-heralding",
        "mean_abs_error_rad": sweep.mean_abs_error_rad,
        "rms_error_rad": sweep.rms_error_rad,
        "mean_crb_rad": sweep.mean_crb_rad,
        "mean_abs_error_uas": sweep.mean_abs_error_uas,
        "mean_crb_uas": sweep.mean_crb_uas,
        "ratio": ratio,
        "degenerate_trials": sweep.degenerate_trials,
        "theta_rad": sweep.thetas.tolist(),
        "theta_hat_rad": sweep.theta_hats.tolist(),
        "crb_rad": sweep.crbs.tolist(),
    }
    return row, diag


def mle_sim(
    config: Config, cache_dir: Path | None = None, workers: int = 1
) -> tuple[list[list], list[dict]]:
    """Monte Carlo MLE angular error versus the CRB over (baseline, N_t)."""
    window_counts = config.window_counts or (config.windows,)
    tasks = [
        _MleTask(config, baseline, int(n), str(cache_dir) if cache_dir else None)
        for baseline in config.baselines_km
        for n in window_counts
    ]
    results = _map_points(_mle_point, tasks, workers)
    return [r for r, _ in results], [d for _, d in results]


# ---------------------------------------------------------------------------
# detector-sweep
# ---------------------------------------------------------------------------

DETECTOR_SWEEP_HEADER = ("L_km", "xi", "p_d", "N_t", "mean_delta_theta_uas")


@dataclass(frozen=True)
class _DetectorTask:
    config: Config
    baseline_km: float
    xi: float
    cache_dir: str | None


def _detector_point(task: _DetectorTask) -> list:
    config = task.config
    cache = TableCache(task.cache_dir) if task.cache_dir else None
    point = build_point(
        config, config.primary_source(), task.baseline_km, xi=task.xi, cache=cache
    )
    sweep = average_angular_error(
        point.table,
        config.wavelength_nm * 1e-9,
        task.baseline_km * 1e3,
        config.windows,
        config.trials,
        config.seed,
    )
    return [
        task.baseline_km,
        task.xi,
        config.dark_count,
        config.windows,
        sweep.mean_abs_error_uas,
    ]


def detector_sweep(
    config: Config, cache_dir: Path | None = None, workers: int = 1
) -> list[list]:
    """Mean angular error over the baseline grid for each detector efficiency."""
    tasks = [
        _DetectorTask(config, baseline, xi, str(cache_dir) if cache_dir else None)
        for baseline in config.baselines_km
        for xi in config.xi_values
    ]
    return _map_points(_detector_point, tasks, workers)


# ---------------------------------------------------------------------------
# oracle-check
# ---------------------------------------------------------------------------

ORACLE_TOL = 1e-9


def oracle_check(config: Config, corrupt: bool = False) -> tuple[str, bool]:
    """Compare closed-form coefficients against the Fock engine.

    Covers both single-source models at (mu=1, eta=0.5), the multi-source
    circuit, and the explicit two-click binomial formulas.  `corrupt`
    deliberately perturbs one engine coefficient to self-test the harness.
    Returns (report text, pass/fail).
    """
    lines = ["oracle check: closed-form coefficients vs Fock engine"]
    ok = True
    star = StarlightModel(config.epsilon)

    def check(label: str, deviation: float) -> None:
        nonlocal ok
        passed = deviation <= ORACLE_TOL
        ok &= passed
        lines.append(
            f"  {label}: max deviation {deviation:.3e} "
            f"({'ok' if passed else f'FAIL > {ORACLE_TOL:g}'})"
        )

    d_max = config.oracle_d_max
    for kind in ("coherent", "heralded"):
        source = SourceModel(kind, mu=1.0)
        pms = [source.photon_numbers(0.5, d_max)]
        engine = build_virtual_table(
            pms, star, n_modes=2, m_max=d_max, tail_ceiling=1.0
        )
        if corrupt:
            occ = next(iter(sorted(engine.entries)))
            entries = dict(engine.entries)
            k = entries[occ]
            entries[occ] = (k[0] + 1e-6, k[1], k[2])
            engine = type(engine)(entries, engine.n_detectors, engine.tail_mass)
        closed = closed_form_virtual_table(pms, star, n_modes=2, d_total_max=d_max)
        cmp = compare_virtual_tables(engine, closed, d_max)
        check(
            f"single {kind} (mu=1, eta=0.5, photons<={d_max})",
            max(cmp.max_coefficient_deviation, cmp.max_probability_deviation),
        )

    n = config.oracle_multi_n
    d_multi = config.oracle_multi_d_max
    source = SourceModel("heralded", mu=1.0)
    pms = [source.photon_numbers(0.5, d_multi)] * (n - 1)
    engine = build_virtual_table(pms, star, n_modes=n, m_max=d_multi, tail_ceiling=1.0)
    closed = closed_form_virtual_table(pms, star, n_modes=n, d_total_max=d_multi)
    cmp = compare_virtual_tables(engine, closed, d_multi)
    check(
        f"multi-source N={n} (photons<={d_multi})",
        max(cmp.max_coefficient_deviation, cmp.max_probability_deviation),
    )

    worst = 0.0
    for m_total in range(1, 4):
        _, star_data = _sector_amplitudes_dft(2, (m_total - 1,))
        aux_own, _ = _sector_amplitudes_dft(2, (m_total,))
        for k in range(2):
            for l in range(2):
                for n_a in range(m_total + 1):
                    n_b = m_total - n_a
                    d = [0, 0, 0, 0]
                    d[k] += n_a
                    d[2 + l] += n_b
                    d = tuple(d)
                    a_amp, b_amp, c_amp = two_click_amplitudes(n_a, n_b, k, l)
                    cross = a_amp * b_amp.conjugate()
                    expect_star = (
                        (abs(a_amp) ** 2 + abs(b_amp) ** 2) / 2.0,
                        cross.real,
                        -cross.imag,
                    )
                    got_star = star_data.get(d, (0.0, 0.0, 0.0))
                    worst = max(
                        worst,
                        max(abs(x - y) for x, y in zip(expect_star, got_star)),
                        abs(abs(c_amp) ** 2 - aux_own.get(d, 0.0)),
                    )
    check("two-click binomial amplitudes (photons<=3)", worst)

    lines.append("PASS" if ok else "FAIL")
    return "\n".join(lines), ok
