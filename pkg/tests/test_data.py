"""Data pipeline: CSV round trip, filtering, scaling, imputation, assembly,
fold splitting, and the synthetic generator's determinism and planted truth."""
from __future__ import annotations

import numpy as np
import pytest

from seqrisk.data import (
    Cohort,
    DataFormatError,
    GeneratorConfig,
    PatientRecord,
    Variable,
    VariableCatalog,
    assemble_features,
    cohort_medians,
    fill_static,
    forward_fill,
    generate_synthetic_cohort,
    generate_synthetic_cohort_with_truth,
    load_cohort,
    minmax_normalize,
    preprocess_cohort,
    prevalence_filter,
    split_folds,
    write_cohort,
)
from seqrisk.metrics import auc


def _toy_catalog() -> VariableCatalog:
    return VariableCatalog([
        Variable("crp", "longitudinal", "labs"),
        Variable("wbc", "longitudinal", "labs"),
        Variable("age", "static_numeric", "demographic"),
        Variable("diabetes", "static_binary", "history"),
    ])


def _toy_cohort() -> Cohort:
    records = [
        PatientRecord("a", 1, {"age": 70.0}, {"diabetes": 1},
                      [(0, {"crp": 5.0, "wbc": 10.0}), (2, {"crp": 9.0})]),
        PatientRecord("b", 0, {"age": 50.0}, {"diabetes": 0},
                      [(0, {"wbc": 6.0}), (1, {"crp": 3.0, "wbc": 7.0})]),
        PatientRecord("c", 0, {"age": 60.0}, {},
                      [(0, {"crp": 1.0, "wbc": 8.0})]),
    ]
    return Cohort(records=records, catalog=_toy_catalog())


class TestRecords:
    def test_label_validation(self):
        with pytest.raises(ValueError):
            PatientRecord("p", 2, {}, {}, [])

    def test_day_indices_must_increase(self):
        with pytest.raises(ValueError):
            PatientRecord("p", 0, {}, {}, [(3, {}), (3, {})])

    def test_duplicate_patient_ids_rejected(self):
        r = PatientRecord("p", 0, {}, {}, [(0, {"crp": 1.0})])
        with pytest.raises(ValueError):
            Cohort(records=[r, r], catalog=_toy_catalog())


class TestCsvRoundTrip:
    def test_round_trip_preserves_everything(self, tmp_path):
        cohort = _toy_cohort()
        write_cohort(cohort, tmp_path)
        loaded = load_cohort(tmp_path)
        assert [r.patient_id for r in loaded.records] == ["a", "b", "c"]
        assert loaded.catalog.feature_names() == cohort.catalog.feature_names()
        for orig, back in zip(cohort.records, loaded.records):
            assert orig.label == back.label
            assert orig.static_numeric == back.static_numeric
            assert orig.static_binary == back.static_binary
            assert orig.visits == back.visits

    def test_missing_file_raises_format_error(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_cohort(tmp_path)

    def test_bad_number_raises_with_location(self, tmp_path):
        write_cohort(_toy_cohort(), tmp_path)
        visits = tmp_path / "visits.csv"
        visits.write_text(visits.read_text().replace("5.0", "not-a-number", 1))
        with pytest.raises(DataFormatError, match="not-a-number"):
            load_cohort(tmp_path)

    def test_bad_header_rejected(self, tmp_path):
        write_cohort(_toy_cohort(), tmp_path)
        static = tmp_path / "static.csv"
        lines = static.read_text().splitlines()
        lines[0] = "id,outcome,age,diabetes"
        static.write_text("\n".join(lines))
        with pytest.raises(DataFormatError, match="header"):
            load_cohort(tmp_path)

    def test_generator_output_survives_round_trip(self, tmp_path):
        cfg = GeneratorConfig(n_patients=12, seed=3)
        cohort = generate_synthetic_cohort(cfg)
        write_cohort(cohort, tmp_path)
        loaded = load_cohort(tmp_path)
        assert len(loaded) == 12
        for orig, back in zip(cohort.records, loaded.records):
            assert orig.visits == back.visits
            assert orig.static_numeric == back.static_numeric


class TestPrevalenceFilter:
    def test_rare_variable_dropped(self):
        cat = VariableCatalog([
            Variable("common", "longitudinal", "labs"),
            Variable("rare", "longitudinal", "labs"),
        ])
        records = [
            PatientRecord(f"p{i}", i % 2, {}, {},
                          [(0, {"common": 1.0} | ({"rare": 2.0} if i == 0 else {}))])
            for i in range(10)
        ]
        filtered, dropped = prevalence_filter(Cohort(records, cat), threshold=0.95)
        assert dropped == ["rare"]
        assert filtered.catalog.longitudinal == ["common"]
        for r in filtered.records:
            for _, values in r.visits:
                assert "rare" not in values

    def test_threshold_is_inclusive_boundary(self):
        # a variable seen by exactly threshold of patients is dropped
        cat = VariableCatalog([
            Variable("v", "longitudinal", "labs"),
            Variable("w", "longitudinal", "labs"),
        ])
        records = [
            PatientRecord(f"p{i}", i % 2, {}, {},
                          [(0, {"w": 1.0} | ({"v": 1.0} if i < 5 else {}))])
            for i in range(10)
        ]
        _, dropped = prevalence_filter(Cohort(records, cat), threshold=0.5)
        assert dropped == ["v"]

    def test_everything_kept_when_prevalent(self):
        filtered, dropped = prevalence_filter(_toy_cohort(), threshold=0.5)
        assert dropped == []
        assert filtered.catalog.feature_names() == _toy_cohort().catalog.feature_names()


class TestNormalization:
    def test_values_land_in_unit_interval(self):
        normalized, table = minmax_normalize(_toy_cohort())
        for r in normalized.records:
            for _, values in r.visits:
                for v in values.values():
                    assert 0.0 <= v <= 1.0
            for v in r.static_numeric.values():
                assert 0.0 <= v <= 1.0

    def test_observed_extremes_map_to_zero_and_one(self):
        normalized, table = minmax_normalize(_toy_cohort())
        assert table["crp"] == (1.0, 9.0)
        crp_values = [v for r in normalized.records
                      for _, vals in r.visits for k, v in vals.items() if k == "crp"]
        assert min(crp_values) == 0.0
        assert max(crp_values) == 1.0

    def test_constant_variable_maps_to_zero(self):
        cat = VariableCatalog([Variable("flat", "longitudinal", "labs")])
        records = [PatientRecord(f"p{i}", i % 2, {}, {}, [(0, {"flat": 7.0})])
                   for i in range(4)]
        normalized, table = minmax_normalize(Cohort(records, cat))
        assert table["flat"] == (7.0, 7.0)
        for r in normalized.records:
            assert r.visits[0][1]["flat"] == 0.0

    def test_binary_flags_pass_through(self):
        normalized, table = minmax_normalize(_toy_cohort())
        assert "diabetes" not in table
        assert normalized.records[0].static_binary["diabetes"] == 1


class TestImputation:
    def test_forward_fill_carries_last_value(self):
        cohort = _toy_cohort()
        medians = cohort_medians(cohort)
        filled = forward_fill(cohort.records[0], cohort.catalog, medians)
        # wbc observed at day 0 only; day 2 carries it forward
        assert filled.visits[1][1]["wbc"] == 10.0
        assert filled.visits[1][1]["crp"] == 9.0

    def test_median_backstop_before_first_observation(self):
        # crp missing at patient b's first visit: cohort median fills it
        cohort = _toy_cohort()
        medians = cohort_medians(cohort)
        filled = forward_fill(cohort.records[1], cohort.catalog, medians)
        assert filled.visits[0][1]["crp"] == medians["crp"]
        assert filled.visits[1][1]["crp"] == 3.0

    def test_known_median_value(self):
        # crp observations: 5, 9, 3, 1 -> median 4
        medians = cohort_medians(_toy_cohort())
        assert medians["crp"] == 4.0

    def test_fill_static_completes_numeric_and_binary(self):
        cohort = _toy_cohort()
        medians = cohort_medians(cohort)
        filled = fill_static(cohort.records[2], cohort.catalog, medians)
        assert filled.static_numeric["age"] == 60.0
        assert filled.static_binary["diabetes"] == 0


class TestAssembly:
    def test_feature_order_and_static_repetition(self):
        cohort = _toy_cohort()
        medians = cohort_medians(cohort)
        rec = fill_static(forward_fill(cohort.records[0], cohort.catalog, medians),
                          cohort.catalog, medians)
        seq = assemble_features(rec, cohort.catalog)
        assert cohort.catalog.feature_names() == ["crp", "wbc", "age", "diabetes"]
        assert seq.matrix.shape == (2, 4)
        # statics repeat on every row
        np.testing.assert_array_equal(seq.matrix.data[:, 2], 70.0)
        np.testing.assert_array_equal(seq.matrix.data[:, 3], 1.0)
        np.testing.assert_array_equal(seq.matrix.data[:, 0], [5.0, 9.0])
        assert seq.mask.all()
        assert seq.label == 1

    def test_incomplete_record_rejected(self):
        cohort = _toy_cohort()
        with pytest.raises(ValueError):
            assemble_features(cohort.records[1], cohort.catalog)  # not imputed

    def test_scaling_table_cross_check(self):
        cohort = _toy_cohort()
        medians = cohort_medians(cohort)
        rec = fill_static(forward_fill(cohort.records[0], cohort.catalog, medians),
                          cohort.catalog, medians)
        with pytest.raises(ValueError, match="scaling table"):
            assemble_features(rec, cohort.catalog, scaling_table={"crp": (0.0, 1.0)})


class TestPreprocessPipeline:
    def test_end_to_end_shapes_and_masks(self):
        cfg = GeneratorConfig(n_patients=20, seed=1)
        cohort = generate_synthetic_cohort(cfg)
        pre = preprocess_cohort(cohort)
        assert set(pre.sequences) == {r.patient_id for r in cohort.records}
        for r in cohort.records:
            seq = pre.sequences[r.patient_id]
            assert seq.matrix.shape == (len(r.visits), pre.n_features)
            assert seq.mask.all()
            assert 0.0 <= seq.matrix.data.min() and seq.matrix.data.max() <= 1.0

    def test_rare_labs_are_dropped_by_default_threshold(self):
        cfg = GeneratorConfig(n_patients=40, seed=2, rare_detect_fraction=0.5)
        pre = preprocess_cohort(generate_synthetic_cohort(cfg))
        assert any(name.startswith("lab_rare") for name in pre.dropped)

    def test_modality_restriction(self):
        cfg = GeneratorConfig(n_patients=20, seed=1)
        cohort = generate_synthetic_cohort(cfg)
        pre = preprocess_cohort(cohort, modalities=("labs",))
        assert all(v.modality == "labs" for v in pre.catalog.variables)
        with pytest.raises(ValueError):
            preprocess_cohort(cohort, modalities=("no-such-modality",))


class TestFoldSplit:
    def _cohort(self, n=50, seed=0):
        return generate_synthetic_cohort(GeneratorConfig(n_patients=n, seed=seed))

    def test_test_sets_partition_cohort(self):
        cohort = self._cohort()
        splits = split_folds(cohort, k=5, val_fraction=0.2, seed=0)
        all_test = [pid for s in splits for pid in s.test]
        assert sorted(all_test) == sorted(r.patient_id for r in cohort.records)
        assert len(set(all_test)) == len(all_test)

    def test_no_leakage_within_fold(self):
        for s in split_folds(self._cohort(), k=5, val_fraction=0.2, seed=1):
            assert not set(s.test) & set(s.train)
            assert not set(s.test) & set(s.val)
            assert not set(s.train) & set(s.val)

    def test_stratification_within_one(self):
        cohort = self._cohort(n=60)
        labels = cohort.labels()
        n_pos = sum(labels.values())
        splits = split_folds(cohort, k=5, val_fraction=0.2, seed=0)
        per_fold = [sum(labels[pid] for pid in s.test) for s in splits]
        assert max(per_fold) - min(per_fold) <= 1
        assert sum(per_fold) == n_pos

    def test_deterministic_for_seed(self):
        cohort = self._cohort()
        a = split_folds(cohort, k=5, val_fraction=0.2, seed=7)
        b = split_folds(cohort, k=5, val_fraction=0.2, seed=7)
        for s, t in zip(a, b):
            assert s.train == t.train and s.val == t.val and s.test == t.test
        c = split_folds(cohort, k=5, val_fraction=0.2, seed=8)
        assert any(s.test != t.test for s, t in zip(a, c))

    def test_single_class_rejected(self):
        cat = VariableCatalog([Variable("v", "longitudinal", "labs")])
        records = [PatientRecord(f"p{i}", 1, {}, {}, [(0, {"v": 1.0})]) for i in range(10)]
        with pytest.raises(ValueError):
            split_folds(Cohort(records, cat), k=5)


class TestGenerator:
    def test_same_seed_same_cohort(self):
        a = generate_synthetic_cohort(GeneratorConfig(n_patients=15, seed=5))
        b = generate_synthetic_cohort(GeneratorConfig(n_patients=15, seed=5))
        for r, s in zip(a.records, b.records):
            assert r.visits == s.visits
            assert r.label == s.label
            assert r.static_numeric == s.static_numeric

    def test_different_seed_differs(self):
        a = generate_synthetic_cohort(GeneratorConfig(n_patients=15, seed=5))
        b = generate_synthetic_cohort(GeneratorConfig(n_patients=15, seed=6))
        assert any(r.visits != s.visits for r, s in zip(a.records, b.records))

    def test_sequence_lengths_respect_bounds(self):
        cfg = GeneratorConfig(n_patients=60, seed=0)
        for r in generate_synthetic_cohort(cfg).records:
            assert cfg.seq_len_min <= len(r.visits) <= cfg.seq_len_max

    def test_truth_logits_predict_labels(self):
        cohort, truth = generate_synthetic_cohort_with_truth(
            GeneratorConfig(n_patients=300, seed=0))
        scores = [truth[r.patient_id] for r in cohort.records]
        labels = [r.label for r in cohort.records]
        assert auc(scores, labels) > 0.7

    def test_zero_coefficients_make_labels_independent(self):
        cfg = GeneratorConfig(
            n_patients=400, seed=0, signal_level=0.0, signal_spike=0.0,
            signal_short=0.0, signal_long=0.0, signal_static=0.0)
        cohort, truth = generate_synthetic_cohort_with_truth(cfg)
        assert all(v == 0.0 for v in truth.values())
        prevalence = np.mean([r.label for r in cohort.records])
        assert 0.4 < prevalence < 0.6

    def test_too_few_labs_rejected(self):
        with pytest.raises(ValueError):
            generate_synthetic_cohort(GeneratorConfig(n_patients=5, n_labs=10))

    def test_config_round_trip(self):
        cfg = GeneratorConfig(n_patients=99, signal_spike=2.5, seed=11)
        assert GeneratorConfig.from_dict(cfg.to_dict()) == cfg
