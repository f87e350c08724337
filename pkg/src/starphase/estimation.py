"""Fisher information, Cramér-Rao bounds, and maximum-likelihood estimation.

Works on outcome tables whose probabilities are affine in (cos phi, sin phi),
so derivatives are analytic.  Experiments interleave two phase-shifter
settings (0 and pi/2) to resolve the sign of phi; sampling is multinomial
with a counter-based generator (Philox) so that every record and sweep is
bit-reproducible from its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .detection import DetectorModel, OutcomeTable, ThresholdOutcome

#: One radian in microarcseconds.
RAD_TO_UAS = 180.0 / math.pi * 3600.0 * 1e6

#: Probability floor applied before taking logs in the likelihood.
LOG_FLOOR = 1e-300

#: Phase-shifter settings of the standard two-setting experiment.
DEFAULT_SHIFTS = (0.0, math.pi / 2.0)

MLE_GRID_POINTS = 256
MLE_TOL_RAD = 1e-8


class EstimationError(ValueError):
    """Raised on invalid estimation inputs."""


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by (seed, stream).

    Distinct streams are statistically independent, so parallel trials can
    each own stream index = trial index.
    """
    key = np.array([seed % 2**64, stream % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Fisher information and the Cramér-Rao bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FisherReport:
    """Fisher information per time window at one operating point."""

    phi: float
    shift: float
    fisher: float
    contributions: dict[ThresholdOutcome, float]
    singular: tuple[ThresholdOutcome, ...] = ()


def fisher_information(
    table: OutcomeTable, phi: float, shift: float = 0.0
) -> FisherReport:
    """F(phi) = sum_outcomes (dP/dphi)^2 / P with analytic derivatives.

    Outcomes with both P and dP/dphi below 1e-15 contribute zero (their
    ratio has a finite limit that vanishes quadratically).  A vanishing P
    with a non-vanishing derivative cannot occur for a positive table; if
    rounding produces one it is excluded from the sum and flagged in
    `singular` rather than crashing or poisoning the total.
    """
    probs = table.probabilities(phi, shift)
    dprobs = table.dprobabilities(phi, shift)
    contributions: dict[ThresholdOutcome, float] = {}
    singular: list[ThresholdOutcome] = []
    total = 0.0
    for outcome, p, dp in zip(table.outcomes, probs, dprobs):
        if p < 1e-15:
            if abs(dp) < 1e-15:
                contributions[outcome] = 0.0
            else:
                singular.append(outcome)
            continue
        c = dp * dp / p
        contributions[outcome] = c
        total += c
    return FisherReport(phi, shift, total, contributions, tuple(singular))


def two_setting_fisher(
    table: OutcomeTable, phi: float, shifts: Sequence[float] = DEFAULT_SHIFTS
) -> float:
    """Summed Fisher information of one window per phase-shifter setting."""
    return sum(fisher_information(table, phi, s).fisher for s in shifts)


def crb_phase_uncertainty(fisher: float, n_windows: float) -> float:
    """Cramér-Rao lower bound on the phase spread, 1/sqrt(N_t F)."""
    if n_windows < 1:
        raise EstimationError("need at least one time window")
    if fisher < 0:
        raise EstimationError("Fisher information must be non-negative")
    if fisher == 0.0:
        return math.inf
    return 1.0 / math.sqrt(n_windows * fisher)


def crb_angular_uncertainty(
    fisher: float, n_windows: float, wavelength_m: float, baseline_m: float
) -> float:
    """Angular Cramér-Rao bound in radians: (lambda / 2 pi L) / sqrt(N_t F).

    Returns inf for zero Fisher information (phase-independent statistics
    carry no angular information).
    """
    dphi = crb_phase_uncertainty(fisher, n_windows)
    return wavelength_m / (2.0 * math.pi * baseline_m) * dphi


def phase_from_angle(theta: float, wavelength_m: float, baseline_m: float) -> float:
    """phi = 2 pi L sin(theta) / lambda."""
    return 2.0 * math.pi * baseline_m * math.sin(theta) / wavelength_m


def angle_from_phase(phi: float, wavelength_m: float, baseline_m: float) -> float:
    """theta = arcsin(lambda phi / (2 pi L)); errors outside arcsin's domain."""
    x = wavelength_m * phi / (2.0 * math.pi * baseline_m)
    if abs(x) > 1.0:
        raise EstimationError(f"phase {phi} maps outside the arcsin domain (x={x})")
    return math.asin(x)


# ---------------------------------------------------------------------------
# Simulated experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRecord:
    """Observed counts per threshold outcome for each phase-shifter setting.

    `counts[s, m]` is the number of the `n_windows` time windows of setting
    `shifts[s]` that produced outcome `outcomes[m]`.  Pseudo-records built
    from expected counts hold floats instead of integers.
    """

    outcomes: tuple[ThresholdOutcome, ...]
    counts: np.ndarray
    shifts: tuple[float, ...]
    n_windows: float
    seed: int | None
    phi_true: float | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.shape != (len(self.shifts), len(self.outcomes)):
            raise EstimationError(
                f"counts shape {counts.shape} does not match "
                f"{len(self.shifts)} settings x {len(self.outcomes)} outcomes"
            )
        object.__setattr__(self, "counts", counts)


def sample_experiment(
    table: OutcomeTable,
    phi_true: float,
    n_windows: int,
    seed: int,
    stream: int = 0,
    shifts: Sequence[float] = DEFAULT_SHIFTS,
) -> ExperimentRecord:
    """Multinomial draw of `n_windows` windows per phase-shifter setting.

    Probabilities are renormalized over the table's covered outcomes, i.e.
    sampling is conditional on the (tiny) truncated tail not occurring.
    Deterministic given (seed, stream).
    """
    rng = rng_stream(seed, stream)
    rows = []
    for shift in shifts:
        p = np.clip(table.probabilities(phi_true, shift), 0.0, None)
        total = p.sum()
        if total <= 0:
            raise EstimationError("table carries no probability mass")
        rows.append(rng.multinomial(n_windows, p / total))
    return ExperimentRecord(
        table.outcomes,
        np.array(rows, dtype=float),
        tuple(shifts),
        n_windows,
        seed,
        phi_true,
    )


def expected_record(
    table: OutcomeTable,
    phi_true: float,
    n_windows: float,
    shifts: Sequence[float] = DEFAULT_SHIFTS,
) -> ExperimentRecord:
    """Infinite-statistics surrogate: fractional counts N_t * P(outcome)."""
    rows = [
        n_windows * np.clip(table.probabilities(phi_true, s), 0.0, None)
        for s in shifts
    ]
    return ExperimentRecord(
        table.outcomes, np.array(rows), tuple(shifts), n_windows, None, phi_true
    )


# ---------------------------------------------------------------------------
# Maximum-likelihood phase and angle estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimationResult:
    """MLE output: phase estimate plus optimizer diagnostics."""

    phi_hat: float
    nll: float
    degenerate: bool
    evaluations: int
    theta_hat: float | None = None


def negative_log_likelihood(
    record: ExperimentRecord, table: OutcomeTable, phi: float
) -> float:
    """-sum over settings and outcomes of counts * log P(outcome | phi, s).

    Probabilities are floored at 1e-300 so an outcome observed despite a
    (truncated-to-)zero modeled probability yields a large finite penalty
    instead of a crash; such events stay visible through the huge NLL.
    """
    if record.outcomes != table.outcomes:
        raise EstimationError("record and table outcome sets do not match")
    nll = 0.0
    for row, shift in zip(record.counts, record.shifts):
        p = np.clip(table.probabilities(phi, shift), LOG_FLOOR, None)
        nll -= float(row @ np.log(p))
    return nll


def _nll_derivative(
    record: ExperimentRecord, table: OutcomeTable, phi: float
) -> float:
    """Analytic d/dphi of the negative log-likelihood: -sum counts * P'/P."""
    deriv = 0.0
    for row, shift in zip(record.counts, record.shifts):
        p = np.clip(table.probabilities(phi, shift), LOG_FLOOR, None)
        dp = table.dprobabilities(phi, shift)
        deriv -= float(row @ (dp / p))
    return deriv


def mle_phase(
    record: ExperimentRecord,
    table: OutcomeTable,
    grid_points: int = MLE_GRID_POINTS,
    tol_rad: float = MLE_TOL_RAD,
) -> EstimationResult:
    """Minimize the negative log-likelihood over phi in [0, 2 pi).

    Coarse scan on a uniform grid, golden-section refinement of the best
    bracket down to `tol_rad`, then a bisection polish on the analytic
    likelihood derivative (the raw NLL is numerically flat within a few
    1e-6 rad of its minimum, the derivative resolves far below that).
    Ties prefer the smaller phi.  A likelihood flat over the whole grid
    (e.g. no starlight) is flagged degenerate, with the estimate left at
    the first grid point.
    """
    grid = np.linspace(0.0, 2.0 * math.pi, grid_points, endpoint=False)
    values = np.array([negative_log_likelihood(record, table, p) for p in grid])
    best = int(np.argmin(values))
    evals = grid_points

    spread = float(values.max() - values.min())
    scale = max(1.0, float(np.abs(values).max()))
    if spread < 1e-9 * scale:
        return EstimationResult(float(grid[0]), float(values[0]), True, evals)

    step = grid[1] - grid[0]
    lo = grid[best] - 2.0 * step
    hi = grid[best] + 2.0 * step
    a, b = lo, hi
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = negative_log_likelihood(record, table, c)
    fd = negative_log_likelihood(record, table, d)
    evals += 2
    while (b - a) > tol_rad:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = negative_log_likelihood(record, table, c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = negative_log_likelihood(record, table, d)
        evals += 1
    phi_hat, nll = (c, fc) if fc < fd else (d, fd)

    g_lo = _nll_derivative(record, table, lo)
    g_hi = _nll_derivative(record, table, hi)
    evals += 2
    if g_lo < 0.0 < g_hi:
        x_lo, x_hi = lo, hi
        for _ in range(80):
            mid = 0.5 * (x_lo + x_hi)
            g = _nll_derivative(record, table, mid)
            evals += 1
            if g < 0.0:
                x_lo = mid
            else:
                x_hi = mid
            if (x_hi - x_lo) < 1e-12:
                break
        phi_hat = 0.5 * (x_lo + x_hi)
        nll = negative_log_likelihood(record, table, phi_hat)

    phi_hat = float(phi_hat % (2.0 * math.pi))
    return EstimationResult(phi_hat, float(nll), False, evals)


def mle_angle(
    record: ExperimentRecord,
    table: OutcomeTable,
    wavelength_m: float,
    baseline_m: float,
    **kwargs,
) -> EstimationResult:
    """MLE of phi followed by the arcsin map to the source angle."""
    result = mle_phase(record, table, **kwargs)
    theta = None
    if not result.degenerate:
        theta = angle_from_phase(result.phi_hat, wavelength_m, baseline_m)
    return EstimationResult(
        result.phi_hat, result.nll, result.degenerate, result.evaluations, theta
    )


# ---------------------------------------------------------------------------
# Starlight-intensity estimation from vacuum-auxiliary windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpsilonEstimate:
    """Starlight intensity inferred from windows with vacuum auxiliary input."""

    epsilon_hat: float
    low: float
    high: float
    click_fraction: float
    n_windows: int


def _invert_click_fraction(f: float, xi: float, dark_free: float) -> float:
    # f = 1 - (1 - eps*xi) * dark_free, with dark_free = (1-p_d)^(detectors)
    eps = (f - (1.0 - dark_free)) / (xi * dark_free)
    return min(1.0, max(0.0, eps))


def estimate_epsilon(
    n_windows: int,
    n_click_windows: int,
    detector: DetectorModel,
    n_detectors: int,
    confidence: float = 0.95,
) -> EpsilonEstimate:
    """Estimate epsilon from the fraction of vacuum-auxiliary windows with clicks.

    With no auxiliary light a window clicks iff the star photon is detected
    (probability eps * xi) or any detector fires dark, so

        P(click window) = 1 - (1 - eps*xi) * (1 - p_d)^n_detectors.

    The estimator inverts this at the observed fraction; the confidence
    interval is Clopper-Pearson on the fraction, mapped through the same
    inversion (monotone).
    """
    if detector.xi == 0.0:
        raise EstimationError("cannot estimate epsilon with zero-efficiency detectors")
    if not 0 <= n_click_windows <= n_windows or n_windows < 1:
        raise EstimationError("invalid window counts")
    dark_free = (1.0 - detector.dark_count) ** n_detectors
    if dark_free == 0.0:
        raise EstimationError("every window clicks dark; epsilon unidentifiable")
    f = n_click_windows / n_windows
    alpha = 1.0 - confidence
    if n_click_windows == 0:
        f_lo = 0.0
    else:
        f_lo = float(stats.beta.ppf(alpha / 2.0, n_click_windows, n_windows - n_click_windows + 1))
    if n_click_windows == n_windows:
        f_hi = 1.0
    else:
        f_hi = float(stats.beta.ppf(1.0 - alpha / 2.0, n_click_windows + 1, n_windows - n_click_windows))
    xi = detector.xi
    return EpsilonEstimate(
        _invert_click_fraction(f, xi, dark_free),
        _invert_click_fraction(f_lo, xi, dark_free),
        _invert_click_fraction(f_hi, xi, dark_free),
        f,
        n_windows,
    )


def sample_vacuum_windows(
    epsilon: float,
    detector: DetectorModel,
    n_detectors: int,
    n_windows: int,
    seed: int,
    stream: int = 0,
) -> int:
    """Number of click windows among `n_windows` with vacuum auxiliary input."""
    dark_free = (1.0 - detector.dark_count) ** n_detectors
    p_click = 1.0 - (1.0 - epsilon * detector.xi) * dark_free
    rng = rng_stream(seed, stream)
    return int(rng.binomial(n_windows, p_click))


# ---------------------------------------------------------------------------
# Angular-error Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AngularErrorSweepPoint:
    """Monte Carlo angular error at one (baseline, window-count) point."""

    baseline_m: float
    wavelength_m: float
    n_windows: float
    trials: int
    mean_abs_error_rad: float
    rms_error_rad: float
    mean_crb_rad: float
    seed: int
    degenerate_trials: int
    thetas: np.ndarray = field(repr=False)
    theta_hats: np.ndarray = field(repr=False)
    crbs: np.ndarray = field(repr=False)

    @property
    def mean_abs_error_uas(self) -> float:
        return self.mean_abs_error_rad * RAD_TO_UAS

    @property
    def mean_crb_uas(self) -> float:
        return self.mean_crb_rad * RAD_TO_UAS

    @property
    def crb_ratio(self) -> float:
        return self.mean_abs_error_rad / self.mean_crb_rad if self.mean_crb_rad else math.inf


def average_angular_error(
    table: OutcomeTable,
    wavelength_m: float,
    baseline_m: float,
    n_windows: int,
    trials: int,
    seed: int,
    pseudo: bool = False,
    shifts: Sequence[float] = DEFAULT_SHIFTS,
) -> AngularErrorSweepPoint:
    """Average |theta_hat - theta| over random source angles.

    Each trial draws theta uniformly in [0, lambda/L] (one phase period),
    simulates the two-setting experiment, and runs the MLE.  Per-trial CRBs
    use the combined two-setting Fisher information at the trial's true
    phase.  `pseudo=True` replaces sampling with expected-count records
    (the infinite-statistics limit).  Trial t uses RNG stream t, so results
    do not depend on execution order.
    """
    if trials < 1:
        raise EstimationError("need at least one trial")
    thetas = np.empty(trials)
    theta_hats = np.empty(trials)
    crbs = np.empty(trials)
    degenerate = 0
    theta_span = wavelength_m / baseline_m
    for t in range(trials):
        rng = rng_stream(seed, 2 * t)
        theta = float(rng.uniform(0.0, theta_span))
        phi = phase_from_angle(theta, wavelength_m, baseline_m)
        if pseudo:
            record = expected_record(table, phi, n_windows, shifts)
        else:
            record = sample_experiment(
                table, phi, n_windows, seed, stream=2 * t + 1, shifts=shifts
            )
        result = mle_angle(record, table, wavelength_m, baseline_m)
        if result.degenerate or result.theta_hat is None:
            degenerate += 1
            theta_hats[t] = math.nan
        else:
            theta_hats[t] = result.theta_hat
        thetas[t] = theta
        fisher = sum(fisher_information(table, phi, s).fisher for s in shifts)
        crbs[t] = crb_angular_uncertainty(
            fisher, n_windows, wavelength_m, baseline_m
        ) if fisher > 0 else math.inf
    errors = np.abs(theta_hats - thetas)
    valid = ~np.isnan(errors)
    mean_abs = float(np.mean(errors[valid])) if valid.any() else math.nan
    rms = float(np.sqrt(np.mean(errors[valid] ** 2))) if valid.any() else math.nan
    finite_crbs = crbs[np.isfinite(crbs)]
    mean_crb = float(finite_crbs.mean()) if finite_crbs.size else math.inf
    return AngularErrorSweepPoint(
        baseline_m,
        wavelength_m,
        n_windows,
        trials,
        mean_abs,
        rms,
        mean_crb,
        seed,
        degenerate,
        thetas,
        theta_hats,
        crbs,
    )
