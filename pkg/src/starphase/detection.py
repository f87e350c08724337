"""Threshold-detection statistics of starlight interfering with auxiliary light.

Every outcome probability in this experiment is affine in (cos phi, sin phi):

    P(outcome | phi, shift s) = K0 + K1*cos(phi + s) + K2*sin(phi + s),

where phi is the stellar phase difference between the telescopes and s is the
local phase-shifter setting.  Tables of (K0, K1, K2) per outcome are built
exactly by the Fock engine, photon-number sector by sector: the star photon's
two injection paths (telescope A with the phase factor, telescope B without)
are expanded separately, so no numeric phi is ever baked into a table.

Virtual outcomes are per-detector photon counts (as if detectors resolved
number); real outcomes are per-detector click booleans.  Detector efficiency
thins the virtual counts before thresholding; dark counts overlay the click
patterns after.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .fock import (
    FockError,
    LinearCircuit,
    OccupationVector,
    SparseAmplitudeState,
    apply_circuit,
    apply_creation,
    dft_circuit,
    vacuum_state,
)
from .sources import PhotonNumberDistribution, SourceModel

ThresholdOutcome = tuple[int, ...]

#: Default ceiling on the photon-number mass a table may leave unaccounted.
TAIL_CEILING = 0.3

#: Default cap on enumerated multi-source photon-number events.
EVENT_CAP = 200_000


class DetectionError(ValueError):
    """Raised on invalid detection-model inputs or truncation overruns."""


@dataclass(frozen=True)
class StarlightModel:
    """Weak-starlight description: epsilon is the per-window probability that
    the telescopes share one stellar photon; phi its phase difference."""

    epsilon: float
    phi: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise DetectionError(f"epsilon {self.epsilon} outside [0, 1]")


@dataclass(frozen=True)
class DetectorModel:
    """Threshold-detector imperfections: efficiency xi, dark-count probability p_d."""

    xi: float = 1.0
    dark_count: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.xi <= 1.0:
            raise DetectionError(f"efficiency {self.xi} outside [0, 1]")
        if not 0.0 <= self.dark_count <= 1.0:
            raise DetectionError(f"dark-count probability {self.dark_count} outside [0, 1]")

    def is_ideal(self) -> bool:
        return self.xi == 1.0 and self.dark_count == 0.0


@dataclass(frozen=True)
class OutcomeCoefficients:
    """Affine coefficients of one outcome: P = K0 + K1*cos(phi+s) + K2*sin(phi+s)."""

    k0: float
    k1: float
    k2: float

    def probability(self, phi: float, shift: float = 0.0) -> float:
        return self.k0 + self.k1 * math.cos(phi + shift) + self.k2 * math.sin(phi + shift)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.k0, self.k1, self.k2)


# ---------------------------------------------------------------------------
# Per-sector amplitude data (independent of source weights and epsilon)
# ---------------------------------------------------------------------------


def _aux_input_state(n_modes: int, event: tuple[int, ...]) -> SparseAmplitudeState:
    """Auxiliary input state for one photon-number event.

    Source i (i = 0 .. N-2) feeds input port i+1 of both telescope circuits
    with a balanced split of event[i] photons; port 0 is reserved for the
    star.  Mode layout: A-inputs 0..N-1, then B-inputs N..2N-1.
    """
    state = vacuum_state(2 * n_modes)
    scale = 1.0
    for i, m in enumerate(event):
        port = i + 1
        for _ in range(m):
            state = apply_creation(state, {port: 1.0, n_modes + port: 1.0})
        scale *= math.sqrt(2.0**m * math.factorial(m))
    return SparseAmplitudeState(
        {occ: a / scale for occ, a in state.terms.items()}, state.mode_count
    )


def _sector_amplitudes(
    n_modes: int, event: tuple[int, ...], circuit: LinearCircuit
) -> tuple[
    dict[OccupationVector, float],
    dict[OccupationVector, tuple[float, float, float]],
]:
    """Detector-basis amplitude data for one auxiliary photon-number event.

    Returns (aux, star): `aux` maps each count vector d to |<d|aux event>|^2;
    `star` maps d to (u, r, i) such that the star-present branch satisfies
    P(d|phi) = u + r*cos(phi) + i*sin(phi).  Both are independent of the
    source weights, transmittance, and epsilon, so they are cached per
    (N, event) and reweighted cheaply when assembling tables.
    """
    if len(event) != n_modes - 1:
        raise DetectionError(
            f"{n_modes}-mode telescopes take {n_modes - 1} sources, got {len(event)}"
        )
    aux_in = _aux_input_state(n_modes, event)
    xi_state = apply_circuit(aux_in, circuit, modes=range(n_modes))
    xi_state = apply_circuit(xi_state, circuit, modes=range(n_modes, 2 * n_modes))

    aux = {occ: abs(amp) ** 2 for occ, amp in xi_state.terms.items()}

    star_col = circuit.matrix[:, 0]
    inject_a = apply_creation(xi_state, {i: star_col[i] for i in range(n_modes)})
    inject_b = apply_creation(
        xi_state, {n_modes + i: star_col[i] for i in range(n_modes)}
    )
    star: dict[OccupationVector, tuple[float, float, float]] = {}
    for occ in set(inject_a.terms) | set(inject_b.terms):
        alpha = inject_a.amplitude(occ)
        beta = inject_b.amplitude(occ)
        # |e^{i phi} alpha + beta|^2 / 2, expanded in cos/sin
        cross = alpha * beta.conjugate()
        star[occ] = (
            (abs(alpha) ** 2 + abs(beta) ** 2) / 2.0,
            cross.real,
            -cross.imag,
        )
    return aux, star


@lru_cache(maxsize=None)
def _sector_amplitudes_dft(n_modes: int, event: tuple[int, ...]):
    return _sector_amplitudes(n_modes, event, dft_circuit(n_modes))


# ---------------------------------------------------------------------------
# Virtual (photon-number-resolved) coefficient tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VirtualOutcomeTable:
    """Affine coefficients per virtual outcome (per-detector photon counts)."""

    entries: Mapping[OccupationVector, tuple[float, float, float]]
    n_detectors: int
    tail_mass: float
    meta: Mapping[str, object] = field(default_factory=dict)

    def coefficients(self, occ: OccupationVector) -> OutcomeCoefficients:
        return OutcomeCoefficients(*self.entries.get(tuple(occ), (0.0, 0.0, 0.0)))


def _enumerate_events(n_sources: int, m_max: int, event_cap: int):
    events = []
    for total in range(m_max + 1):
        for cuts in itertools.combinations(range(total + n_sources - 1), n_sources - 1):
            event = []
            prev = -1
            for c in cuts:
                event.append(c - prev - 1)
                prev = c
            event.append(total + n_sources - 1 - prev - 1)
            events.append(tuple(event))
            if len(events) > event_cap:
                raise DetectionError(
                    f"photon-number event count exceeds cap {event_cap}; "
                    "lower m_max or raise the event cap"
                )
    return events


def build_virtual_table(
    pms: Sequence[PhotonNumberDistribution],
    star: StarlightModel,
    n_modes: int = 2,
    m_max: int | None = None,
    circuit: LinearCircuit | None = None,
    tail_ceiling: float = TAIL_CEILING,
    event_cap: int = EVENT_CAP,
    meta: Mapping[str, object] | None = None,
) -> VirtualOutcomeTable:
    """Assemble the virtual outcome table for N-1 sources on N-mode telescopes.

    `pms` gives each source's surviving-photon distribution (one entry per
    input port 2..N).  Photon-number events are enumerated up to a total of
    `m_max` auxiliary photons (default: the smallest of the distributions'
    own truncations); the star photon adds at most one more.  The weight of
    the discarded events is recorded as tail mass, and the build refuses if
    it exceeds `tail_ceiling`.
    """
    if n_modes < 2:
        raise DetectionError("telescopes need at least 2 modes")
    if len(pms) != n_modes - 1:
        raise DetectionError(
            f"{n_modes}-mode telescopes take {n_modes - 1} sources, got {len(pms)}"
        )
    if m_max is None:
        m_max = min(pm.m_max for pm in pms)
    use_cache = circuit is None
    if circuit is not None and circuit.dim != n_modes:
        raise DetectionError(
            f"circuit dimension {circuit.dim} does not match {n_modes} modes"
        )

    eps = star.epsilon
    events = _enumerate_events(len(pms), m_max, event_cap)
    covered = 0.0
    acc: dict[OccupationVector, list[float]] = {}

    def add(occ, k0, k1=0.0, k2=0.0):
        entry = acc.get(occ)
        if entry is None:
            acc[occ] = [k0, k1, k2]
        else:
            entry[0] += k0
            entry[1] += k1
            entry[2] += k2

    for event in events:
        weight = 1.0
        for pm, m in zip(pms, event):
            weight *= pm.p(m)
        covered += weight
        if weight == 0.0:
            continue
        if use_cache:
            aux, star_data = _sector_amplitudes_dft(n_modes, event)
        else:
            aux, star_data = _sector_amplitudes(n_modes, event, circuit)
        if eps < 1.0:
            w = (1.0 - eps) * weight
            for occ, q in aux.items():
                add(occ, w * q)
        if eps > 0.0:
            w = eps * weight
            for occ, (u, r, i) in star_data.items():
                add(occ, w * u, w * r, w * i)

    tail = max(0.0, 1.0 - covered)
    if tail > tail_ceiling:
        raise DetectionError(
            f"truncated photon-number mass {tail:.3g} exceeds ceiling "
            f"{tail_ceiling:.3g}; raise m_max (or the ceiling) to proceed"
        )
    entries = {occ: tuple(k) for occ, k in acc.items()}
    return VirtualOutcomeTable(entries, 2 * n_modes, tail, dict(meta or {}))


def apply_efficiency(
    table: VirtualOutcomeTable, xi: float
) -> VirtualOutcomeTable:
    """Thin the virtual counts for detector efficiency xi (per photon).

    Binomial thinning per detector mode, applied coefficient-wise; must run
    before threshold aggregation.  xi = 1 is an exact identity.
    """
    if not 0.0 <= xi <= 1.0:
        raise DetectionError(f"efficiency {xi} outside [0, 1]")
    if xi == 1.0:
        return table
    entries = {occ: list(k) for occ, k in table.entries.items()}
    for j in range(table.n_detectors):
        out: dict[OccupationVector, list[float]] = {}
        for occ, k in entries.items():
            n = occ[j]
            for kept in range(n + 1):
                w = math.comb(n, kept) * xi**kept * (1.0 - xi) ** (n - kept)
                if w == 0.0:
                    continue
                new_occ = occ[:j] + (kept,) + occ[j + 1 :]
                entry = out.get(new_occ)
                if entry is None:
                    out[new_occ] = [k[0] * w, k[1] * w, k[2] * w]
                else:
                    entry[0] += k[0] * w
                    entry[1] += k[1] * w
                    entry[2] += k[2] * w
        entries = out
    return VirtualOutcomeTable(
        {occ: tuple(k) for occ, k in entries.items()},
        table.n_detectors,
        table.tail_mass,
        dict(table.meta),
    )


# ---------------------------------------------------------------------------
# Threshold (click-pattern) tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutcomeTable:
    """Affine coefficients per threshold outcome (per-detector click booleans)."""

    entries: Mapping[ThresholdOutcome, tuple[float, float, float]]
    n_detectors: int
    tail_mass: float
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        outcomes = sorted(self.entries)
        k = np.array([self.entries[o] for o in outcomes], dtype=float)
        if k.size == 0:
            k = np.zeros((0, 3))
        object.__setattr__(self, "_outcomes", tuple(outcomes))
        object.__setattr__(self, "_k", k)

    @property
    def outcomes(self) -> tuple[ThresholdOutcome, ...]:
        return self._outcomes

    @property
    def coefficient_matrix(self) -> np.ndarray:
        """(M, 3) array of (K0, K1, K2) rows aligned with `outcomes`."""
        return self._k

    def coefficients(self, outcome: ThresholdOutcome) -> OutcomeCoefficients:
        return OutcomeCoefficients(*self.entries.get(tuple(outcome), (0.0, 0.0, 0.0)))

    def probabilities(self, phi: float, shift: float = 0.0) -> np.ndarray:
        """P(outcome | phi, shift) for every outcome, aligned with `outcomes`."""
        k = self._k
        return k[:, 0] + k[:, 1] * math.cos(phi + shift) + k[:, 2] * math.sin(phi + shift)

    def dprobabilities(self, phi: float, shift: float = 0.0) -> np.ndarray:
        """Analytic d P / d phi for every outcome."""
        k = self._k
        return -k[:, 1] * math.sin(phi + shift) + k[:, 2] * math.cos(phi + shift)

    def normalization_error(self, phi_grid: int = 32) -> float:
        """Max deviation of sum_outcomes P from the covered mass over a phi grid."""
        worst = 0.0
        for phi in np.linspace(0.0, 2.0 * np.pi, phi_grid, endpoint=False):
            worst = max(worst, abs(self.probabilities(phi).sum() - (1.0 - self.tail_mass)))
        return worst

    def to_json_dict(self) -> dict:
        return {
            "schema": "starphase.outcome-table/1",
            "n_detectors": self.n_detectors,
            "tail_mass": self.tail_mass,
            "meta": dict(self.meta),
            "entries": {
                "".join(map(str, occ)): list(k) for occ, k in sorted(self.entries.items())
            },
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "OutcomeTable":
        if data.get("schema") != "starphase.outcome-table/1":
            raise DetectionError(f"unknown table schema {data.get('schema')!r}")
        entries = {
            tuple(int(c) for c in key): tuple(value)
            for key, value in data["entries"].items()
        }
        return cls(entries, int(data["n_detectors"]), float(data["tail_mass"]), data.get("meta", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "OutcomeTable":
        return cls.from_json_dict(json.loads(text))


def aggregate_threshold(table: VirtualOutcomeTable) -> OutcomeTable:
    """Collapse virtual count vectors to click patterns, summing coefficients."""
    acc: dict[ThresholdOutcome, list[float]] = {}
    for occ, k in table.entries.items():
        pattern = tuple(int(n > 0) for n in occ)
        entry = acc.get(pattern)
        if entry is None:
            acc[pattern] = list(k)
        else:
            entry[0] += k[0]
            entry[1] += k[1]
            entry[2] += k[2]
    return OutcomeTable(
        {p: tuple(k) for p, k in acc.items()},
        table.n_detectors,
        table.tail_mass,
        dict(table.meta),
    )


def apply_dark_counts(table: OutcomeTable, p_d: float) -> OutcomeTable:
    """Overlay independent dark counts: each silent detector clicks with p_d.

    Applied after threshold aggregation, coefficient-wise; p_d = 0 is an
    exact identity.
    """
    if not 0.0 <= p_d <= 1.0:
        raise DetectionError(f"dark-count probability {p_d} outside [0, 1]")
    if p_d == 0.0:
        return table
    acc: dict[ThresholdOutcome, list[float]] = {}
    for pattern, k in table.entries.items():
        silent = [j for j, c in enumerate(pattern) if c == 0]
        for flips in itertools.product((0, 1), repeat=len(silent)):
            n_flip = sum(flips)
            w = p_d**n_flip * (1.0 - p_d) ** (len(silent) - n_flip)
            if w == 0.0:
                continue
            new = list(pattern)
            for j, f in zip(silent, flips):
                new[j] = f
            key = tuple(new)
            entry = acc.get(key)
            if entry is None:
                acc[key] = [k[0] * w, k[1] * w, k[2] * w]
            else:
                entry[0] += k[0] * w
                entry[1] += k[1] * w
                entry[2] += k[2] * w
    return OutcomeTable(
        {p: tuple(k) for p, k in acc.items()},
        table.n_detectors,
        table.tail_mass,
        dict(table.meta),
    )


# ---------------------------------------------------------------------------
# End-to-end builders
# ---------------------------------------------------------------------------


def build_single_source_table(
    source: SourceModel,
    eta: float,
    star: StarlightModel,
    m_max: int,
    detector: DetectorModel | None = None,
    tail_ceiling: float = TAIL_CEILING,
    meta: Mapping[str, object] | None = None,
) -> OutcomeTable:
    """Full pipeline for one auxiliary source and 2-mode telescopes.

    Each telescope mixes the star mode with its auxiliary beam on a balanced
    beamsplitter feeding two threshold detectors (outcome order a_1, a_2,
    b_1, b_2).
    """
    return build_multi_source_table(
        2, [source], eta, star, m_max, detector, tail_ceiling, meta=meta
    )


def build_multi_source_table(
    n_modes: int,
    sources: Sequence[SourceModel] | SourceModel,
    eta: float,
    star: StarlightModel,
    m_max: int,
    detector: DetectorModel | None = None,
    tail_ceiling: float = TAIL_CEILING,
    event_cap: int = EVENT_CAP,
    meta: Mapping[str, object] | None = None,
) -> OutcomeTable:
    """Full pipeline for N-1 sources on N-mode telescopes.

    The star enters input port 1 of each telescope's Fourier circuit, the
    sources ports 2..N.  `sources` may be a single model (shared by every
    port) or one model per port.  Detector efficiency is applied to the
    virtual counts, dark counts to the aggregated click patterns.
    """
    if isinstance(sources, SourceModel):
        sources = [sources] * (n_modes - 1)
    pms = [s.photon_numbers(eta, m_max) for s in sources]
    virtual = build_virtual_table(
        pms,
        star,
        n_modes=n_modes,
        m_max=m_max,
        tail_ceiling=tail_ceiling,
        event_cap=event_cap,
        meta=meta,
    )
    detector = detector or DetectorModel()
    virtual = apply_efficiency(virtual, detector.xi)
    table = aggregate_threshold(virtual)
    return apply_dark_counts(table, detector.dark_count)
