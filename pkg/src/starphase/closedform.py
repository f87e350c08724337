"""Closed-form virtual-outcome coefficients, independent of the Fock engine.

Each auxiliary source occupies one normalized effective mode after the
telescope circuits (the circuit column spread evenly over both telescopes),
and the star photon one more.  Amplitudes onto a count vector d are then
plain multinomial sums over how each source's photons split across the
detectors — no state expansion involved.  This route exists to cross-check
`detection.build_virtual_table`; the two must agree to 1e-9.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detection import StarlightModel, VirtualOutcomeTable
from .fock import LinearCircuit, OccupationVector, dft_circuit
from .sources import PhotonNumberDistribution


def _source_coefficient_rows(n_modes: int, circuit: LinearCircuit) -> np.ndarray:
    """Row i = detector-mode coefficients of source i's effective mode.

    Source i enters input port i+1 of both telescope circuits; its single
    effective mode has coefficient U[j, i+1]/sqrt(2) on detector j of each
    telescope (A detectors first, then B).
    """
    u = circuit.matrix
    rows = np.zeros((n_modes - 1, 2 * n_modes), dtype=complex)
    for i in range(n_modes - 1):
        rows[i, :n_modes] = u[:, i + 1] / math.sqrt(2.0)
        rows[i, n_modes:] = u[:, i + 1] / math.sqrt(2.0)
    return rows


def _compositions_bounded(total: int, bounds: Sequence[int]):
    """All ways to write `total` as per-cell counts with cell <= bound."""
    if len(bounds) == 1:
        if total <= bounds[0]:
            yield (total,)
        return
    for first in range(min(total, bounds[0]) + 1):
        for rest in _compositions_bounded(total - first, bounds[1:]):
            yield (first,) + rest


def aux_event_amplitude(
    coeff_rows: np.ndarray, event: Sequence[int], d: OccupationVector
) -> complex:
    """<d| product_i (c_i†)^{m_i} / sqrt(m_i!) |vac> by multinomial summation.

    Sums over allocations e[i][j] (photons of source i landing on detector
    mode j) with column sums d and row sums `event`:

        sqrt(prod_j d_j!) * sum_e prod_i [ sqrt(m_i!) / prod_j e_ij!
                                           * prod_j c_ij^{e_ij} ].
    """
    if sum(event) != sum(d):
        return 0.0 + 0.0j

    def allocate(i: int, remaining: tuple[int, ...]) -> complex:
        if i == len(event):
            return 1.0 + 0.0j if all(r == 0 for r in remaining) else 0.0 + 0.0j
        total = 0.0 + 0.0j
        m_i = event[i]
        for alloc in _compositions_bounded(m_i, remaining):
            coeff = math.sqrt(math.factorial(m_i))
            prod = 1.0 + 0.0j
            for j, e in enumerate(alloc):
                if e:
                    c = coeff_rows[i, j]
                    if c == 0:
                        prod = 0.0
                        break
                    prod *= c**e
                    coeff /= math.factorial(e)
            if prod == 0.0:
                continue
            rest = tuple(r - e for r, e in zip(remaining, alloc))
            total += coeff * prod * allocate(i + 1, rest)
        return total

    scale = math.sqrt(math.prod(math.factorial(n) for n in d))
    return scale * allocate(0, tuple(d))


def virtual_coefficients(
    n_modes: int,
    event: Sequence[int],
    d: OccupationVector,
    circuit: LinearCircuit | None = None,
) -> tuple[float, float, float, float]:
    """Sector data (q, u, r, i) for one event and count vector, closed form.

    q is the aux-only branch probability |<d|event>|^2 (needs sum(d) equal
    to the event total); (u, r, i) describe the star-present branch,
    P(d|phi) = u + r cos(phi) + i sin(phi) (needs one extra photon in d).
    Matches the cached engine data in `detection._sector_amplitudes`.
    """
    circuit = circuit or dft_circuit(n_modes)
    rows = _source_coefficient_rows(n_modes, circuit)
    total = sum(d)
    m_total = sum(event)
    q = u = r = i_coef = 0.0
    if total == m_total:
        q = abs(aux_event_amplitude(rows, event, d)) ** 2
    if total == m_total + 1:
        star_col = circuit.matrix[:, 0]
        alpha = 0.0 + 0.0j
        beta = 0.0 + 0.0j
        for j in range(2 * n_modes):
            if d[j] == 0:
                continue
            reduced = d[:j] + (d[j] - 1,) + d[j + 1 :]
            partial = math.sqrt(d[j]) * aux_event_amplitude(rows, event, reduced)
            if j < n_modes:
                alpha += star_col[j] * partial
            else:
                beta += star_col[j - n_modes] * partial
        cross = alpha * beta.conjugate()
        u = (abs(alpha) ** 2 + abs(beta) ** 2) / 2.0
        r = cross.real
        i_coef = -cross.imag
    return q, u, r, i_coef


def two_click_amplitudes(
    n_a: int,
    n_b: int,
    k: int,
    l: int,
    circuit: LinearCircuit | None = None,
) -> tuple[complex, complex, complex]:
    """Single-source amplitudes for the outcome with clicks only at D_{a,k}, D_{b,l}.

    For the count vector with n_a photons at telescope A's detector k and
    n_b at telescope B's detector l (k, l zero-based), returns (A, B, C):

        <d | star branch, n_a+n_b-1 aux photons> = (A e^{i phi} + B)/sqrt(2),
        <d | aux branch,  n_a+n_b   aux photons> = C,

    in explicit binomial form (star column w, source column v of the 2-mode
    circuit):

        C = sqrt(C(m, n_a) / 2^m) v_k^{n_a} v_l^{n_b},            m = n_a+n_b,
        A = w_k sqrt(n_a) sqrt(C(m-1, n_a-1)/2^{m-1}) v_k^{n_a-1} v_l^{n_b},
        B = w_l sqrt(n_b) sqrt(C(m-1, n_a)/2^{m-1})   v_k^{n_a} v_l^{n_b-1}.
    """
    if n_a < 0 or n_b < 0 or n_a + n_b < 1:
        raise ValueError("need at least one photon across the detector pair")
    circuit = circuit or dft_circuit(2)
    w = circuit.matrix[:, 0]
    v = circuit.matrix[:, 1]
    m = n_a + n_b
    c_amp = math.sqrt(math.comb(m, n_a) / 2.0**m) * v[k] ** n_a * v[l] ** n_b
    a_amp = 0.0 + 0.0j
    b_amp = 0.0 + 0.0j
    if n_a >= 1:
        a_amp = (
            w[k]
            * math.sqrt(n_a)
            * math.sqrt(math.comb(m - 1, n_a - 1) / 2.0 ** (m - 1))
            * v[k] ** (n_a - 1)
            * v[l] ** n_b
        )
    if n_b >= 1:
        b_amp = (
            w[l]
            * math.sqrt(n_b)
            * math.sqrt(math.comb(m - 1, n_a) / 2.0 ** (m - 1))
            * v[k] ** n_a
            * v[l] ** (n_b - 1)
        )
    return a_amp, b_amp, c_amp


def closed_form_virtual_table(
    pms: Sequence[PhotonNumberDistribution],
    star: StarlightModel,
    n_modes: int = 2,
    d_total_max: int = 3,
    circuit: LinearCircuit | None = None,
) -> VirtualOutcomeTable:
    """Closed-form counterpart of `detection.build_virtual_table`.

    Covers every count vector with at most `d_total_max` photons; intended
    for oracle comparisons, not production (the engine path is faster for
    deep tables because its sector data is cached).
    """
    circuit = circuit or dft_circuit(n_modes)
    rows = _source_coefficient_rows(n_modes, circuit)
    star_col = circuit.matrix[:, 0]
    eps = star.epsilon
    n_sources = n_modes - 1

    events_by_total: dict[int, list[tuple[int, ...]]] = {}
    for total in range(d_total_max + 1):
        events_by_total[total] = [
            e
            for e in itertools.product(range(total + 1), repeat=n_sources)
            if sum(e) == total
        ]

    entries: dict[OccupationVector, tuple[float, float, float]] = {}
    for total in range(d_total_max + 1):
        for d in _compositions_bounded(total, [total] * (2 * n_modes)):
            k0 = k1 = k2 = 0.0
            for event in events_by_total[total]:
                weight = math.prod(pm.p(m) for pm, m in zip(pms, event))
                if weight == 0.0:
                    continue
                q = abs(aux_event_amplitude(rows, event, d)) ** 2
                k0 += (1.0 - eps) * weight * q
            if total >= 1:
                for event in events_by_total[total - 1]:
                    weight = math.prod(pm.p(m) for pm, m in zip(pms, event))
                    if weight == 0.0:
                        continue
                    alpha = 0.0 + 0.0j
                    beta = 0.0 + 0.0j
                    for j in range(2 * n_modes):
                        if d[j] == 0:
                            continue
                        reduced = d[:j] + (d[j] - 1,) + d[j + 1 :]
                        partial = math.sqrt(d[j]) * aux_event_amplitude(
                            rows, event, reduced
                        )
                        if j < n_modes:
                            alpha += star_col[j] * partial
                        else:
                            beta += star_col[j - n_modes] * partial
                    cross = alpha * beta.conjugate()
                    k0 += eps * weight * (abs(alpha) ** 2 + abs(beta) ** 2) / 2.0
                    k1 += eps * weight * cross.real
                    k2 -= eps * weight * cross.imag
            entries[d] = (k0, k1, k2)
    return VirtualOutcomeTable(
        entries,
        2 * n_modes,
        0.0,
        {"partial": True, "d_total_max": d_total_max},
    )


@dataclass(frozen=True)
class OracleComparison:
    """Worst-case disagreement between the closed-form and engine routes."""

    max_coefficient_deviation: float
    max_probability_deviation: float
    outcomes_compared: int
    worst_outcome: OccupationVector | None


def compare_virtual_tables(
    engine: VirtualOutcomeTable,
    closed: VirtualOutcomeTable,
    d_total_max: int,
    phi_grid: int = 16,
) -> OracleComparison:
    """Per-outcome deviation between two virtual tables up to d_total_max photons."""
    keys = {
        d
        for d in set(engine.entries) | set(closed.entries)
        if sum(d) <= d_total_max
    }
    phis = np.linspace(0.0, 2.0 * math.pi, phi_grid, endpoint=False)
    worst_k = 0.0
    worst_p = 0.0
    worst_outcome = None
    for d in keys:
        ka = np.array(engine.entries.get(d, (0.0, 0.0, 0.0)))
        kb = np.array(closed.entries.get(d, (0.0, 0.0, 0.0)))
        dev_k = float(np.max(np.abs(ka - kb)))
        pa = ka[0] + ka[1] * np.cos(phis) + ka[2] * np.sin(phis)
        pb = kb[0] + kb[1] * np.cos(phis) + kb[2] * np.sin(phis)
        dev_p = float(np.max(np.abs(pa - pb)))
        if max(dev_k, dev_p) > max(worst_k, worst_p):
            worst_outcome = d
        worst_k = max(worst_k, dev_k)
        worst_p = max(worst_p, dev_p)
    return OracleComparison(worst_k, worst_p, len(keys), worst_outcome)
