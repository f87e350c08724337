"""Exact sparse multimode Fock-space engine.

States are maps from occupation vectors (photons per mode) to complex
amplitudes.  Linear-optical circuits act by creation-operator substitution,
loss channels by Kraus decomposition, so every operation here is exact up to
floating point.  This module is the brute-force reference that the faster
closed-form coefficient paths are checked against.

Mode ordering convention: telescope A's modes first, then telescope B's,
i.e. (a_1, ..., a_N, b_1, ..., b_N).  All higher-level modules share it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

OccupationVector = tuple[int, ...]

#: Amplitudes below this magnitude are dropped from sparse states.
PRUNE_TOL = 1e-15

#: Max allowed deviation of U·U† from the identity.
UNITARY_TOL = 1e-10


class FockError(ValueError):
    """Raised on invalid states, circuits, or channel parameters."""


@dataclass(frozen=True)
class SparseAmplitudeState:
    """Pure multimode Fock state as a sparse occupation → amplitude map."""

    terms: Mapping[OccupationVector, complex]
    mode_count: int

    def __post_init__(self):
        for occ in self.terms:
            if len(occ) != self.mode_count:
                raise FockError(
                    f"occupation {occ} has {len(occ)} modes, expected {self.mode_count}"
                )
            if any(n < 0 for n in occ):
                raise FockError(f"negative occupation in {occ}")

    def norm_sq(self) -> float:
        return sum(abs(a) ** 2 for a in self.terms.values())

    def amplitude(self, occ: OccupationVector) -> complex:
        return self.terms.get(tuple(occ), 0.0 + 0.0j)

    def total_photons(self) -> set[int]:
        """Set of total photon numbers present across basis terms."""
        return {sum(occ) for occ in self.terms}


def _pruned(terms: dict[OccupationVector, complex]) -> dict[OccupationVector, complex]:
    return {occ: a for occ, a in terms.items() if abs(a) > PRUNE_TOL}


def vacuum_state(mode_count: int) -> SparseAmplitudeState:
    return SparseAmplitudeState({(0,) * mode_count: 1.0 + 0.0j}, mode_count)


def _apply_creation_once(
    terms: dict[OccupationVector, complex], coeffs: Mapping[int, complex]
) -> dict[OccupationVector, complex]:
    """Multiply by sum_j coeffs[j]·a_j† (term map level, no pruning)."""
    out: dict[OccupationVector, complex] = {}
    for occ, amp in terms.items():
        for mode, c in coeffs.items():
            new_occ = occ[:mode] + (occ[mode] + 1,) + occ[mode + 1 :]
            contrib = amp * c * math.sqrt(occ[mode] + 1)
            prev = out.get(new_occ)
            out[new_occ] = contrib if prev is None else prev + contrib
    return out


def apply_creation(
    state: SparseAmplitudeState, coeffs: Mapping[int, complex]
) -> SparseAmplitudeState:
    """Apply the (unnormalized) operator sum_j coeffs[j]·a_j† to a state."""
    for mode in coeffs:
        if not 0 <= mode < state.mode_count:
            raise FockError(f"mode {mode} out of range for {state.mode_count} modes")
    return SparseAmplitudeState(
        _pruned(_apply_creation_once(dict(state.terms), coeffs)), state.mode_count
    )


def make_split_state(
    m: int, mode_count: int = 2, modes: tuple[int, int] = (0, 1)
) -> SparseAmplitudeState:
    """Balanced two-mode split of m photons: (a† + b†)^m / sqrt(2^m m!) |vac>.

    The m=0 case is the vacuum; m=1 is the balanced single-photon split
    with amplitude 1/sqrt(2) on each mode of the pair.
    """
    if m < 0:
        raise FockError("photon count must be non-negative")
    j, k = modes
    terms: dict[OccupationVector, complex] = {(0,) * mode_count: 1.0 + 0.0j}
    for _ in range(m):
        terms = _apply_creation_once(terms, {j: 1.0, k: 1.0})
    scale = 1.0 / math.sqrt(2.0**m * math.factorial(m))
    return SparseAmplitudeState(
        _pruned({occ: a * scale for occ, a in terms.items()}), mode_count
    )


@dataclass(frozen=True)
class LinearCircuit:
    """Unitary acting on creation operators: mode j in -> sum_i U[i,j] mode i out."""

    matrix: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.matrix, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise FockError(f"circuit matrix must be square, got {u.shape}")
        dev = np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0])))
        if dev >= UNITARY_TOL:
            raise FockError(f"circuit matrix is not unitary (deviation {dev:.3e})")
        object.__setattr__(self, "matrix", u)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def identity_circuit(n: int) -> LinearCircuit:
    return LinearCircuit(np.eye(n, dtype=complex))


def dft_circuit(n: int) -> LinearCircuit:
    """N-mode discrete-Fourier unitary, U[i,j] = exp(2πi·ij/N)/sqrt(N).

    For n=2 this is the balanced beamsplitter (1/sqrt(2))[[1,1],[1,-1]].
    """
    if n < 1:
        raise FockError("circuit needs at least one mode")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return LinearCircuit(np.exp(2j * np.pi * i * j / n) / math.sqrt(n))


def beamsplitter_50_50() -> LinearCircuit:
    return dft_circuit(2)


def apply_circuit(
    state: SparseAmplitudeState,
    circuit: LinearCircuit,
    modes: Sequence[int] | None = None,
) -> SparseAmplitudeState:
    """Pass a state through a linear circuit by operator substitution.

    Each creation operator a_j† on a circuit mode is replaced by
    sum_i U[i,j]·a_i†.  Photon number and norm are preserved exactly
    (up to float rounding); `modes` selects the subset of state modes
    the circuit acts on, defaulting to all of them.
    """
    if modes is None:
        modes = tuple(range(state.mode_count))
    modes = tuple(modes)
    if len(modes) != circuit.dim:
        raise FockError(
            f"circuit dimension {circuit.dim} does not match {len(modes)} modes"
        )
    if len(set(modes)) != len(modes):
        raise FockError("circuit modes must be distinct")
    u = circuit.matrix
    out: dict[OccupationVector, complex] = {}
    for occ, amp in state.terms.items():
        counts = [occ[j] for j in modes]
        cleared = list(occ)
        scale = 1.0
        for j in modes:
            scale *= math.factorial(occ[j])
            cleared[j] = 0
        work: dict[OccupationVector, complex] = {
            tuple(cleared): amp / math.sqrt(scale)
        }
        for j_local, n_j in enumerate(counts):
            coeffs = {modes[i]: u[i, j_local] for i in range(circuit.dim)}
            for _ in range(n_j):
                work = _apply_creation_once(work, coeffs)
        for new_occ, new_amp in work.items():
            prev = out.get(new_occ)
            out[new_occ] = new_amp if prev is None else prev + new_amp
    result = SparseAmplitudeState(_pruned(out), state.mode_count)
    drift = abs(result.norm_sq() - state.norm_sq())
    if drift > 1e-9:
        raise FockError(f"circuit application drifted the norm by {drift:.3e}")
    return result


WeightedStates = list[tuple[float, SparseAmplitudeState]]


def _loss_etas(
    eta: float | Sequence[float], mode_count: int
) -> tuple[float, ...]:
    etas = (
        tuple(float(eta) for _ in range(mode_count))
        if np.isscalar(eta)
        else tuple(float(e) for e in eta)
    )
    if len(etas) != mode_count:
        raise FockError(f"expected {mode_count} transmittances, got {len(etas)}")
    if any(not 0.0 <= e <= 1.0 for e in etas):
        raise FockError(f"transmittance outside [0, 1]: {etas}")
    return etas


def apply_loss(
    state: SparseAmplitudeState,
    eta: float | Sequence[float],
    weight_floor: float = 1e-18,
) -> WeightedStates:
    """Send a pure state through per-mode loss channels.

    Returns the exact Kraus ensemble: a list of (weight, normalized state)
    pairs indexed by the number of photons lost per mode.  Weights sum to 1.
    """
    etas = _loss_etas(eta, state.mode_count)
    max_counts = [
        max((occ[j] for occ in state.terms), default=0)
        for j in range(state.mode_count)
    ]
    ensemble: WeightedStates = []
    for lost in np.ndindex(*[c + 1 for c in max_counts]):
        terms: dict[OccupationVector, complex] = {}
        for occ, amp in state.terms.items():
            if any(k > n for k, n in zip(lost, occ)):
                continue
            factor = 1.0
            for n, k, e in zip(occ, lost, etas):
                factor *= math.comb(n, k) * e ** (n - k) * (1.0 - e) ** k
            if factor == 0.0:
                continue
            new_occ = tuple(n - k for n, k in zip(occ, lost))
            contrib = amp * math.sqrt(factor)
            prev = terms.get(new_occ)
            terms[new_occ] = contrib if prev is None else prev + contrib
        terms = _pruned(terms)
        if not terms:
            continue
        weight = sum(abs(a) ** 2 for a in terms.values())
        if weight < weight_floor:
            continue
        scale = 1.0 / math.sqrt(weight)
        ensemble.append(
            (
                weight,
                SparseAmplitudeState(
                    {occ: a * scale for occ, a in terms.items()}, state.mode_count
                ),
            )
        )
    return ensemble


@dataclass(frozen=True)
class PnrDistribution:
    """Photon-number-resolved outcome distribution with truncation accounting."""

    probabilities: Mapping[OccupationVector, float]
    tail_mass: float = 0.0
    mode_count: int = field(default=0)

    def __post_init__(self):
        if self.mode_count == 0 and self.probabilities:
            object.__setattr__(
                self, "mode_count", len(next(iter(self.probabilities)))
            )
        for occ, p in self.probabilities.items():
            if p < -1e-12:
                raise FockError(f"negative probability {p} for {occ}")

    def total(self) -> float:
        return sum(self.probabilities.values()) + self.tail_mass

    def probability(self, occ: OccupationVector) -> float:
        return self.probabilities.get(tuple(occ), 0.0)


def pnr_distribution(
    states: SparseAmplitudeState | WeightedStates, tail_mass: float = 0.0
) -> PnrDistribution:
    """Outcome distribution of an ensemble under ideal number-resolving detectors."""
    if isinstance(states, SparseAmplitudeState):
        states = [(1.0, states)]
    total_weight = sum(w for w, _ in states)
    if abs(total_weight + tail_mass - 1.0) > 1e-10:
        raise FockError(
            f"ensemble weights plus tail sum to {total_weight + tail_mass}, not 1"
        )
    probs: dict[OccupationVector, float] = {}
    mode_count = states[0][1].mode_count if states else 0
    for w, state in states:
        if state.mode_count != mode_count:
            raise FockError("ensemble states disagree on mode count")
        for occ, amp in state.terms.items():
            probs[occ] = probs.get(occ, 0.0) + w * abs(amp) ** 2
    return PnrDistribution(probs, tail_mass, mode_count)


def thin_distribution(
    dist: PnrDistribution, eta: float | Sequence[float]
) -> PnrDistribution:
    """Binomial thinning of a PNR distribution, mode by mode."""
    etas = _loss_etas(eta, dist.mode_count)
    probs = dict(dist.probabilities)
    for j, e in enumerate(etas):
        if e == 1.0:
            continue
        out: dict[OccupationVector, float] = {}
        for occ, p in probs.items():
            n = occ[j]
            for k in range(n + 1):
                w = math.comb(n, k) * e**k * (1.0 - e) ** (n - k)
                if w == 0.0:
                    continue
                new_occ = occ[:j] + (k,) + occ[j + 1 :]
                out[new_occ] = out.get(new_occ, 0.0) + p * w
        probs = out
    return PnrDistribution(probs, dist.tail_mass, dist.mode_count)


def tensor_states(
    a: SparseAmplitudeState, b: SparseAmplitudeState
) -> SparseAmplitudeState:
    terms = {
        occ_a + occ_b: amp_a * amp_b
        for occ_a, amp_a in a.terms.items()
        for occ_b, amp_b in b.terms.items()
    }
    return SparseAmplitudeState(_pruned(terms), a.mode_count + b.mode_count)
