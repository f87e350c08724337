"""Detection-model tests: coefficient tables, imperfections, closed-form checks."""

import math

import numpy as np
import pytest

from starphase.closedform import (
    closed_form_virtual_table,
    compare_virtual_tables,
    two_click_amplitudes,
)
from starphase.detection import (
    DetectionError,
    DetectorModel,
    OutcomeTable,
    StarlightModel,
    VirtualOutcomeTable,
    aggregate_threshold,
    apply_dark_counts,
    apply_efficiency,
    build_multi_source_table,
    build_single_source_table,
    build_virtual_table,
)
from starphase.fock import LinearCircuit, dft_circuit
from starphase.sources import SourceModel, default_m_max, generic_pm, heralded_tmss_pm

EPS = 0.02
PHI_GRID = np.linspace(0.0, 2.0 * math.pi, 32, endpoint=False)


def max_coeff_deviation(a, b):
    keys = set(a.entries) | set(b.entries)
    return max(
        abs(x - y)
        for occ in keys
        for x, y in zip(
            a.entries.get(occ, (0.0, 0.0, 0.0)), b.entries.get(occ, (0.0, 0.0, 0.0))
        )
    )


class TestSingleSourceTable:
    def test_no_starlight_is_phase_independent(self):
        source = SourceModel("heralded", mu=2.0)
        table = build_single_source_table(source, 0.4, StarlightModel(0.0), 8)
        k = table.coefficient_matrix
        assert np.max(np.abs(k[:, 1:])) == pytest.approx(0.0, abs=1e-15)

    def test_pure_single_photon_sector_clicks_uniformly(self):
        # with no star and exactly one auxiliary photon, each detector sees it
        # with probability 1/4
        pm = generic_pm((0.0, 1.0), 1.0, 1)
        virtual = build_virtual_table([pm], StarlightModel(0.0), 2, 1)
        for mode in range(4):
            occ = tuple(1 if j == mode else 0 for j in range(4))
            assert virtual.entries[occ][0] == pytest.approx(0.25)

    def test_ideal_single_photon_interference(self, star):
        # lossless single-photon source: the (a_1, b_1) click pair varies as
        # eps/8 * (1 + cos phi), from expanding the two-photon amplitudes
        table = build_single_source_table(SourceModel("single-photon"), 1.0, star, 2)
        coeff = table.coefficients((1, 0, 1, 0))
        assert coeff.k0 == pytest.approx(EPS / 8.0, abs=1e-12)
        assert coeff.k1 == pytest.approx(EPS / 8.0, abs=1e-12)
        assert coeff.k2 == pytest.approx(0.0, abs=1e-12)
        # same-telescope pair interferes away entirely
        assert table.coefficients((1, 1, 0, 0)).k0 == pytest.approx(0.0, abs=1e-14)

    def test_normalization_over_phase_grid(self, heralded_table):
        assert heralded_table.normalization_error() < 1e-9

    def test_non_negative_probabilities(self, heralded_table):
        for phi in PHI_GRID:
            assert heralded_table.probabilities(phi).min() > -1e-12

    def test_positivity_of_coefficients(self, heralded_table):
        for k0, k1, k2 in heralded_table.entries.values():
            assert k0 >= math.hypot(k1, k2) - 1e-12

    def test_symmetric_setup_has_no_sine_component(self, heralded_table):
        k = heralded_table.coefficient_matrix
        assert np.max(np.abs(k[:, 2])) < 1e-10

    def test_parity(self, heralded_table):
        for phi in (0.3, 1.1, 2.9):
            assert heralded_table.probabilities(phi) == pytest.approx(
                heralded_table.probabilities(-phi), abs=1e-14
            )

    def test_tail_ceiling_refusal_mentions_m_max(self, star):
        source = SourceModel("heralded", mu=3.0)
        with pytest.raises(DetectionError, match="m_max"):
            build_single_source_table(source, 0.5, star, 2, tail_ceiling=0.05)


class TestClosedFormAgreement:
    @pytest.mark.parametrize("kind", ["coherent", "heralded"])
    def test_single_source_virtual_tables(self, kind, star):
        source = SourceModel(kind, mu=1.0)
        pms = [source.photon_numbers(0.5, 3)]
        engine = build_virtual_table(pms, star, 2, 3, tail_ceiling=1.0)
        closed = closed_form_virtual_table(pms, star, 2, 3)
        cmp = compare_virtual_tables(engine, closed, 3)
        assert cmp.max_coefficient_deviation < 1e-9
        assert cmp.max_probability_deviation < 1e-9

    def test_multi_source_virtual_tables(self, star):
        pms = [heralded_tmss_pm(1.0, 0.5, 2)] * 2
        engine = build_virtual_table(pms, star, 3, 2, tail_ceiling=1.0)
        closed = closed_form_virtual_table(pms, star, 3, 2)
        cmp = compare_virtual_tables(engine, closed, 2)
        assert cmp.max_coefficient_deviation < 1e-9

    def test_two_click_balance(self):
        # one auxiliary photon, clicks on opposite telescopes: the two star
        # paths interfere with equal weight
        a, b, _ = two_click_amplitudes(1, 1, 0, 0)
        assert abs(a) == pytest.approx(abs(b))
        a, b, _ = two_click_amplitudes(1, 1, 0, 1)
        assert abs(a) == pytest.approx(abs(b))

    def test_two_click_aux_amplitude_is_probability(self):
        for n_a, n_b in ((1, 1), (2, 1), (3, 0)):
            _, _, c = two_click_amplitudes(n_a, n_b, 0, 1)
            assert abs(c) ** 2 >= 0.0

    def test_two_click_rejects_empty(self):
        with pytest.raises(ValueError):
            two_click_amplitudes(0, 0, 0, 0)


class TestAggregation:
    def test_zero_one_counts_map_identically(self):
        entries = {
            (0, 0, 0, 0): (0.25, 0.0, 0.0),
            (1, 0, 1, 0): (0.5, 0.1, 0.0),
            (0, 1, 0, 1): (0.25, -0.1, 0.0),
        }
        virtual = VirtualOutcomeTable(entries, 4, 0.0)
        table = aggregate_threshold(virtual)
        assert set(table.entries) == set(entries)
        for occ, k in entries.items():
            assert table.entries[occ] == pytest.approx(k)

    def test_coefficients_add_within_click_class(self):
        virtual = VirtualOutcomeTable(
            {(2, 0, 0, 0): (0.1, 0.01, 0.0), (1, 0, 0, 0): (0.2, -0.01, 0.0)},
            4,
            0.0,
        )
        table = aggregate_threshold(virtual)
        assert table.entries[(1, 0, 0, 0)] == pytest.approx((0.3, 0.0, 0.0))

    def test_partition_preserves_normalization(self, star):
        source = SourceModel("coherent", mu=1.0)
        pm = source.photon_numbers(0.6, 18)
        virtual = build_virtual_table([pm], star, 2, 18)
        table = aggregate_threshold(virtual)
        for phi in PHI_GRID:
            total = table.probabilities(phi).sum()
            assert total == pytest.approx(1.0 - table.tail_mass, abs=1e-9)


class TestEfficiency:
    def test_unit_efficiency_is_bitwise_identity(self, star):
        pm = heralded_tmss_pm(2.0, 0.3, 10)
        virtual = build_virtual_table([pm], star, 2, 10)
        assert apply_efficiency(virtual, 1.0) is virtual

    def test_zero_efficiency_moves_all_mass_to_vacuum(self, star):
        pm = heralded_tmss_pm(2.0, 0.3, 8)
        virtual = build_virtual_table([pm], star, 2, 8)
        thinned = apply_efficiency(virtual, 0.0)
        covered = 1.0 - virtual.tail_mass
        assert thinned.entries[(0, 0, 0, 0)][0] == pytest.approx(covered, abs=1e-12)
        assert len(thinned.entries) == 1

    def test_single_photon_click_probability(self):
        virtual = VirtualOutcomeTable({(1, 0, 0, 0): (1.0, 0.0, 0.0)}, 4, 0.0)
        thinned = apply_efficiency(virtual, 0.7)
        assert thinned.entries[(1, 0, 0, 0)][0] == pytest.approx(0.7)
        assert thinned.entries[(0, 0, 0, 0)][0] == pytest.approx(0.3)

    def test_efficiency_folds_into_transmittance_and_starlight(self):
        # thinning every detector by xi is the same experiment as a channel
        # with eta*xi and starlight eps*xi; the residual deviation is the
        # truncated tail, so the table must be deep enough
        mu, eta, xi = 8.0, 0.1, 0.5
        source = SourceModel("heralded", mu=mu)
        m_max = default_m_max(SourceModel("heralded", mu=mu), eta)
        thinned = build_single_source_table(
            source, eta, StarlightModel(EPS), m_max, DetectorModel(xi=xi)
        )
        folded = build_single_source_table(
            source, eta * xi, StarlightModel(EPS * xi), m_max
        )
        assert max_coeff_deviation(thinned, folded) < 1e-9


class TestDarkCounts:
    def test_zero_rate_is_identity(self, heralded_table):
        assert apply_dark_counts(heralded_table, 0.0) is heralded_table

    def test_overlay_from_all_silent(self):
        table = OutcomeTable({(0, 0, 0, 0): (1.0, 0.0, 0.0)}, 4, 0.0)
        p_d = 0.05
        dark = apply_dark_counts(table, p_d)
        assert dark.entries[(1, 0, 0, 0)][0] == pytest.approx(
            p_d * (1 - p_d) ** 3
        )
        assert dark.entries[(1, 1, 1, 1)][0] == pytest.approx(p_d**4)

    def test_normalization_preserved(self, heralded_table):
        dark = apply_dark_counts(heralded_table, 0.01)
        assert dark.normalization_error() < 1e-9

    def test_rejects_bad_probability(self, heralded_table):
        with pytest.raises(DetectionError):
            apply_dark_counts(heralded_table, 1.5)


class TestMultiSource:
    def test_two_mode_circuit_equals_single_source(self, star):
        source = SourceModel("heralded", mu=8.0)
        single = build_single_source_table(source, 0.1, star, 12)
        multi = build_multi_source_table(2, source, 0.1, star, 12)
        assert max_coeff_deviation(single, multi) == 0.0

    def test_all_vacuum_sources_stay_silent(self):
        vacuum = SourceModel("generic", pn=(1.0,))
        table = build_multi_source_table(3, vacuum, 0.5, StarlightModel(0.0), 2)
        assert table.entries[(0,) * 6][0] == pytest.approx(1.0)
        assert len(table.entries) == 1

    def test_per_port_sources_allowed(self, star):
        sources = [SourceModel("heralded", mu=0.5), SourceModel("coherent", mu=1.0)]
        table = build_multi_source_table(3, sources, 0.4, star, 3, tail_ceiling=0.6)
        assert table.normalization_error() < 1e-9

    def test_asymmetric_sources_break_parity(self, star):
        # distinct intensities on the two input ports leave a genuine sine
        # component (the symmetric case cancels it between conjugate ports)
        sources = [SourceModel("heralded", mu=0.3), SourceModel("heralded", mu=1.5)]
        table = build_multi_source_table(3, sources, 0.3, star, 6)
        assert np.max(np.abs(table.coefficient_matrix[:, 2])) > 1e-6

    def test_event_cap_guard(self, star):
        source = SourceModel("heralded", mu=1.0)
        with pytest.raises(DetectionError, match="cap"):
            build_multi_source_table(4, source, 0.5, star, 6, event_cap=10)

    def test_source_count_must_match_modes(self, star):
        with pytest.raises(DetectionError):
            build_virtual_table(
                [heralded_tmss_pm(1.0, 0.5, 2)], star, n_modes=3, m_max=2
            )


class TestSerialization:
    def test_json_round_trip(self, heralded_table):
        clone = OutcomeTable.loads(heralded_table.dumps())
        assert clone.n_detectors == heralded_table.n_detectors
        assert clone.tail_mass == heralded_table.tail_mass
        assert set(clone.entries) == set(heralded_table.entries)
        for occ, k in heralded_table.entries.items():
            assert clone.entries[occ] == tuple(k)

    def test_rejects_unknown_schema(self):
        with pytest.raises(DetectionError):
            OutcomeTable.from_json_dict({"schema": "nope", "entries": {}})


class TestEngineDistributionConsistency:
    def test_table_matches_direct_state_assembly(self, star):
        # assemble the full mixed state at a numeric phase through the raw
        # engine (states -> pnr_distribution -> threshold counting) and
        # compare with the coefficient table evaluated at that phase
        import cmath

        from starphase.fock import (
            apply_circuit,
            apply_creation,
            beamsplitter_50_50,
            make_split_state,
            pnr_distribution,
        )

        phi = 0.83
        m_max = 6
        pm = heralded_tmss_pm(1.2, 0.45, m_max)
        ensemble = []
        for m in range(m_max + 1):
            aux = make_split_state(m, mode_count=4, modes=(1, 3))
            ensemble.append(((1.0 - star.epsilon) * pm.p(m), aux))
            starry = apply_creation(
                aux, {0: cmath.exp(1j * phi) / math.sqrt(2), 2: 1.0 / math.sqrt(2)}
            )
            ensemble.append((star.epsilon * pm.p(m), starry))
        bs = beamsplitter_50_50()
        ensemble = [
            (w, apply_circuit(apply_circuit(s, bs, (0, 1)), bs, (2, 3)))
            for w, s in ensemble
        ]
        dist = pnr_distribution(ensemble, tail_mass=pm.tail_mass)

        clicks = {}
        for occ, p in dist.probabilities.items():
            pattern = tuple(int(n > 0) for n in occ)
            clicks[pattern] = clicks.get(pattern, 0.0) + p

        table = build_single_source_table(
            SourceModel("heralded", mu=1.2), 0.45, star, m_max
        )
        probs = dict(zip(table.outcomes, table.probabilities(phi)))
        for pattern in set(clicks) | set(probs):
            assert clicks.get(pattern, 0.0) == pytest.approx(
                probs.get(pattern, 0.0), abs=1e-9
            )


class TestCustomCircuit:
    def test_port_phases_are_gauge(self, star):
        # phases on circuit inputs or outputs cannot move click statistics:
        # detector counts are diagonal and each photon-number sector carries
        # a global input phase
        base = dft_circuit(2).matrix
        phased = LinearCircuit(
            np.diag([1.0, np.exp(0.9j)]) @ base @ np.diag([np.exp(0.3j), np.exp(-1.1j)])
        )
        pm = heralded_tmss_pm(1.0, 0.4, 6)
        plain = aggregate_threshold(build_virtual_table([pm], star, 2, 6))
        gauged = aggregate_threshold(
            build_virtual_table([pm], star, 2, 6, circuit=phased)
        )
        assert max_coeff_deviation(plain, gauged) < 1e-12
        assert gauged.normalization_error() < 1e-9
