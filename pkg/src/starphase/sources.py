"""Auxiliary-source photon-number models and intensity optimization.

Each source sits at the baseline midpoint behind a balanced splitter, so the
light reaching the telescopes is a mixture of m-photon balanced-split states
weighted by a photon-number distribution P_m.  This module computes P_m for
the supported source types after fiber loss, converts baseline length to
per-arm transmittance, and tunes the source intensity mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

SOURCE_KINDS = ("coherent", "heralded", "single-photon", "generic")

#: Lower intensity bound; also the value reported when the optimum sits on
#: the mu -> 0 boundary (heralded sources at transmittance >= 1/2).
MU_MIN = 1e-4
MU_MAX = 1e4


class SourceError(ValueError):
    """Raised on invalid source or channel parameters."""


@dataclass(frozen=True)
class ChannelModel:
    """Fiber channel from the midpoint source to each telescope."""

    attenuation_db_per_km: float
    baseline_km: float

    def __post_init__(self):
        if self.attenuation_db_per_km < 0 or self.baseline_km < 0:
            raise SourceError("attenuation and baseline must be non-negative")


def eta_from_baseline(channel: ChannelModel) -> float:
    """Per-arm transmittance for a source at the baseline midpoint.

    Each arm spans half the baseline, so
    eta = 10^(-attenuation * (L/2) / 10).
    """
    return 10.0 ** (-channel.attenuation_db_per_km * (channel.baseline_km / 2.0) / 10.0)


@dataclass(frozen=True)
class PhotonNumberDistribution:
    """P_m of m surviving auxiliary photons, with truncated tail accounting."""

    probabilities: np.ndarray
    tail_mass: float

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise SourceError("probabilities must be a non-empty 1-d array")
        if np.any(p < -1e-12):
            raise SourceError("negative photon-number probability")
        total = float(p.sum() + self.tail_mass)
        if abs(total - 1.0) > 1e-10:
            raise SourceError(f"distribution sums to {total}, not 1")
        object.__setattr__(self, "probabilities", p)

    @property
    def m_max(self) -> int:
        return self.probabilities.size - 1

    def p(self, m: int) -> float:
        return float(self.probabilities[m]) if 0 <= m <= self.m_max else 0.0

    def mean(self) -> float:
        return float(np.arange(self.probabilities.size) @ self.probabilities)


def coherent_pm(mu: float, eta: float, m_max: int) -> PhotonNumberDistribution:
    """Phase-averaged coherent source through loss: Poisson with mean eta*mu."""
    _check_mu_eta(mu, eta, allow_zero_mu=True)
    x = eta * mu
    m = np.arange(m_max + 1)
    if x == 0.0:
        p = np.zeros(m_max + 1)
        p[0] = 1.0
        return PhotonNumberDistribution(p, 0.0)
    p = np.exp(-x + m * math.log(x) - gammaln(m + 1))
    tail = float(stats.poisson.sf(m_max, x))
    return PhotonNumberDistribution(p, tail)


def heralded_tmss_pm(mu: float, eta: float, m_max: int) -> PhotonNumberDistribution:
    """Heralded two-mode-squeezed source through loss.

    Heralding on a threshold detector removes the vacuum component of the
    source before the splitter; the surviving-photon distribution is then

        P_0 = (1 - eta) / (1 + eta*mu),
        P_m = ((1 + mu)/mu) * (mu*eta)^m / (1 + mu*eta)^(m+1),  m >= 1,

    which is exactly the binomial thinning of the renormalized (vacuum-free)
    geometric source distribution; see `heralded_source_pn`.
    """
    _check_mu_eta(mu, eta)
    if mu == 0.0:
        raise SourceError("heralded source needs mu > 0 (nothing to herald on)")
    x = eta * mu
    p = np.empty(m_max + 1)
    p[0] = (1.0 - eta) / (1.0 + x)
    m = np.arange(1, m_max + 1)
    if x == 0.0:
        p[1:] = 0.0
        tail = 0.0
    else:
        p[1:] = (1.0 + mu) / mu * np.exp(
            m * math.log(x) - (m + 1) * math.log1p(x)
        )
        # geometric remainder beyond m_max, in closed form
        tail = (1.0 + mu) / mu * (x / (1.0 + x)) ** (m_max + 1)
    return PhotonNumberDistribution(p, float(tail))


def heralded_source_pn(mu: float, n_max: int) -> np.ndarray:
    """Photon-number distribution of the heralded beam itself (before loss).

    Geometric with mean mu, conditioned on at least one photon:
    p_0 = 0, p_n = mu^(n-1) / (1+mu)^n for n >= 1.  Feeding this through
    `generic_pm` reproduces `heralded_tmss_pm` up to the truncated tail.
    """
    if mu <= 0:
        raise SourceError("heralded source needs mu > 0")
    n = np.arange(n_max + 1, dtype=float)
    p = np.exp((n - 1.0) * math.log(mu) - n * math.log1p(mu))
    p[0] = 0.0
    return p


def generic_pm(
    pn: Sequence[float], eta: float, m_max: int
) -> PhotonNumberDistribution:
    """Binomial thinning of an arbitrary source photon-number distribution.

    P_m = eta^m * sum_{n>=m} p_n * C(n,m) * (1-eta)^(n-m).  `pn` must be a
    normalized finite distribution (index = photon number).
    """
    p_in = np.asarray(pn, dtype=float)
    if p_in.ndim != 1 or p_in.size == 0:
        raise SourceError("pn must be a non-empty 1-d distribution")
    if np.any(p_in < -1e-12) or abs(p_in.sum() - 1.0) > 1e-12:
        raise SourceError("pn must be non-negative and sum to 1 within 1e-12")
    if not 0.0 <= eta <= 1.0:
        raise SourceError(f"transmittance {eta} outside [0, 1]")
    out = np.zeros(m_max + 1)
    for n, weight in enumerate(p_in):
        if weight == 0.0:
            continue
        hi = min(n, m_max)
        m = np.arange(hi + 1)
        out[: hi + 1] += weight * stats.binom.pmf(m, n, eta)
    tail = max(0.0, 1.0 - float(out.sum()))
    return PhotonNumberDistribution(out, tail)


@dataclass(frozen=True)
class SourceModel:
    """Auxiliary source description: kind plus its tunable intensity.

    Kinds: "coherent" and "heralded" carry a mean photon number mu;
    "single-photon" is the fixed ideal comparator (exactly one photon,
    equivalent to a generic source with p_1 = 1); "generic" carries an
    explicit photon-number distribution.
    """

    kind: str
    mu: float | None = None
    pn: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise SourceError(f"unknown source kind {self.kind!r}")
        if self.kind in ("coherent", "heralded"):
            if self.mu is None or self.mu <= 0:
                raise SourceError(f"{self.kind} source needs mu > 0")
        if self.kind == "generic" and self.pn is None:
            raise SourceError("generic source needs a pn distribution")

    def photon_numbers(self, eta: float, m_max: int) -> PhotonNumberDistribution:
        if self.kind == "coherent":
            return coherent_pm(self.mu, eta, m_max)
        if self.kind == "heralded":
            return heralded_tmss_pm(self.mu, eta, m_max)
        if self.kind == "single-photon":
            return generic_pm((0.0, 1.0), eta, m_max)
        return generic_pm(self.pn, eta, m_max)


def coherent_source(mu: float) -> SourceModel:
    return SourceModel("coherent", mu=mu)


def heralded_source(mu: float) -> SourceModel:
    return SourceModel("heralded", mu=mu)


def single_photon_source() -> SourceModel:
    return SourceModel("single-photon")


def generic_source(pn: Sequence[float]) -> SourceModel:
    return SourceModel("generic", pn=tuple(float(p) for p in pn))


def p1_objective(kind: str, eta: float) -> Callable[[float], float]:
    """Single-surviving-photon probability P_1 as a function of mu."""
    if kind == "coherent":
        return lambda mu: eta * mu * math.exp(-eta * mu)
    if kind == "heralded":
        return lambda mu: eta * (1.0 + mu) / (1.0 + mu * eta) ** 2
    raise SourceError(f"source kind {kind!r} has no tunable intensity")


def default_m_max(
    source: SourceModel, eta: float, tail_target: float = 1e-10, cap: int = 60
) -> int:
    """Smallest truncation whose discarded tail is below `tail_target`.

    Closed-form tails for the coherent (Poisson) and heralded (geometric)
    sources; cumulative scan for generic ones.  Capped to keep table sizes
    bounded; the residual tail is always carried in the distribution.
    """
    if source.kind == "coherent":
        x = eta * source.mu
        for m in range(cap + 1):
            if stats.poisson.sf(m, x) < tail_target:
                return m
        return cap
    if source.kind == "heralded":
        x = eta * source.mu
        if x == 0.0:
            return 1
        ratio = x / (1.0 + x)
        scale = (1.0 + source.mu) / source.mu
        m = math.log(tail_target / scale) / math.log(ratio) - 1.0
        return min(cap, max(1, math.ceil(m)))
    pn = (0.0, 1.0) if source.kind == "single-photon" else source.pn
    cum = 0.0
    for n in range(len(pn) - 1, -1, -1):
        cum += pn[n]
        if cum > tail_target:
            return min(cap, n)
    return 0


@dataclass(frozen=True)
class MuOptimum:
    """Result of a source-intensity optimization."""

    mu: float
    objective: float
    strategy: str
    boundary: bool
    evaluations: int


class OptimizeError(RuntimeError):
    """Raised when the intensity optimizer cannot bracket a maximum."""


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section_max(
    f: Callable[[float], float], lo: float, hi: float, abs_tol: float
) -> tuple[float, float, int]:
    """Golden-section maximization on [lo, hi]; returns (x, f(x), evals)."""
    evals = 0
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    evals += 2
    max_iter = 200
    for _ in range(max_iter):
        if (b - a) <= abs_tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
        evals += 1
    else:
        raise OptimizeError("golden-section search did not converge")
    x = c if fc > fd else d
    return x, max(fc, fd), evals


def optimize_mu(
    kind: str,
    eta: float,
    strategy: str = "max-p1",
    objective: Callable[[float], float] | None = None,
    mu_bounds: tuple[float, float] = (MU_MIN, MU_MAX),
    rel_tol: float = 1e-6,
    grid_points: int = 81,
) -> MuOptimum:
    """Tune the source intensity mu for a given per-arm transmittance.

    Strategies: "max-p1" maximizes the single-surviving-photon probability
    P_1 (closed form); "max-fisher" maximizes a caller-supplied objective,
    typically the full Fisher information of the assembled experiment.
    A log-spaced grid scan brackets the maximum, then golden-section search
    refines it to `rel_tol` (relative on mu).  If the best grid point sits
    on the boundary of `mu_bounds` the supremum is not interior; the bound
    is returned with `boundary=True`.
    """
    if not 0.0 < eta <= 1.0:
        raise SourceError(f"transmittance {eta} must be in (0, 1]")
    if strategy == "max-p1":
        objective = p1_objective(kind, eta)
    elif strategy == "max-fisher":
        if objective is None:
            raise SourceError("max-fisher strategy needs an objective callback")
    else:
        raise SourceError(f"unknown optimization strategy {strategy!r}")

    lo, hi = mu_bounds
    grid = np.logspace(math.log10(lo), math.log10(hi), grid_points)
    values = [objective(mu) for mu in grid]
    best = int(np.argmax(values))
    evals = len(grid)
    if best == 0 or best == len(grid) - 1:
        mu = float(grid[best])
        return MuOptimum(mu, float(values[best]), strategy, True, evals)

    log_f = lambda t: objective(10.0**t)
    t, val, extra = _golden_section_max(
        log_f,
        math.log10(grid[best - 1]),
        math.log10(grid[best + 1]),
        rel_tol / math.log(10.0),
    )
    return MuOptimum(float(10.0**t), float(val), strategy, False, evals + extra)


def _check_mu_eta(mu: float, eta: float, allow_zero_mu: bool = False) -> None:
    if mu < 0 or (mu == 0 and not allow_zero_mu):
        raise SourceError(f"mean photon number must be {'>= 0' if allow_zero_mu else '> 0'}, got {mu}")
    if not 0.0 <= eta <= 1.0:
        raise SourceError(f"transmittance {eta} outside [0, 1]")
