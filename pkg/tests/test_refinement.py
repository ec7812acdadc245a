"""Track refinement: averaging, hierarchical selection, grid search."""

import itertools

import pytest

from icevision_kit.core import BoundingBox, FrameAnnotations, GroundTruthSign, Source
from icevision_kit.refinement import (
    LevelThresholds,
    average_track_distribution,
    format_thresholds,
    grid_search_thresholds,
    hierarchical_select,
    parse_thresholds,
    refine_tracks,
    vote_associated_data,
)
from icevision_kit.scoring import ScoringConfig, score_dataset
from icevision_kit.taxonomy import parse_code
from icevision_kit.tracking import Track, TrackEntry, TrackState


def entry(frame, dist, box=(0, 0, 20, 20), source=Source.DETECTED, data=None, temporary=None):
    return TrackEntry(
        frame_index=frame,
        box=BoundingBox(*box),
        class_distribution={parse_code(c): p for c, p in dist.items()},
        source=source,
        associated_data=data,
        temporary=temporary,
    )


def track(*entries, track_id=0):
    return Track(id=track_id, entries=list(entries), state=TrackState.FINISHED)


THR = LevelThresholds(0.5, 0.5, 0.5)


class TestAverage:
    def test_arithmetic_mean(self):
        t = track(entry(0, {"3.24": 0.8}), entry(3, {"3.24": 0.6}))
        assert average_track_distribution(t) == {parse_code("3.24"): pytest.approx(0.7)}

    def test_absent_code_counts_as_zero(self):
        t = track(entry(0, {"3.24": 1.0}), entry(3, {"5.19.1": 1.0}))
        avg = average_track_distribution(t)
        assert avg[parse_code("3.24")] == pytest.approx(0.5)
        assert avg[parse_code("5.19.1")] == pytest.approx(0.5)

    def test_single_entry_identity(self):
        t = track(entry(0, {"3.24": 0.9}))
        assert average_track_distribution(t) == {parse_code("3.24"): 0.9}

    def test_interpolated_entries_excluded(self):
        t = track(
            entry(0, {"3.24": 1.0}),
            entry(1, {"5.19.1": 1.0}, source=Source.INTERPOLATED),
            entry(3, {"3.24": 0.5}),
        )
        assert average_track_distribution(t) == {parse_code("3.24"): pytest.approx(0.75)}

    def test_no_detected_entries_rejected(self):
        t = track(entry(0, {"3.24": 1.0}, source=Source.INTERPOLATED))
        with pytest.raises(ValueError):
            average_track_distribution(t)


class TestHierarchicalSelect:
    def test_specific_acceptance(self):
        assert hierarchical_select({parse_code("3.24.1"): 0.9}, THR) == (
            parse_code("3.24.1"),
            0.9,
        )

    def test_level2_fallback_sums_mass(self):
        dist = {parse_code("3.24.1"): 0.3, parse_code("3.24.2"): 0.3}
        code, prob = hierarchical_select(dist, THR)
        assert code == parse_code("3.24")
        assert prob == pytest.approx(0.6)

    def test_top_level_fallback(self):
        dist = {parse_code("3.24.1"): 0.3, parse_code("3.25.2"): 0.3}
        code, prob = hierarchical_select(dist, THR)
        assert code == parse_code("3")
        assert prob == pytest.approx(0.6)

    def test_all_levels_fail(self):
        dist = {parse_code("3.24.1"): 0.1, parse_code("5.19.1"): 0.1}
        assert hierarchical_select(dist, THR) is None

    def test_thresholds_inclusive(self):
        assert hierarchical_select({parse_code("3.24.1"): 0.5}, THR) == (
            parse_code("3.24.1"),
            0.5,
        )

    def test_tie_broken_by_canonical_order(self):
        dist = {parse_code("3.25"): 0.5, parse_code("3.24"): 0.5}
        assert hierarchical_select(dist, THR)[0] == parse_code("3.24")

    def test_reported_probability_is_exact_descendant_sum(self):
        dist = {
            parse_code("3.24.1"): 0.2,
            parse_code("3.24.2"): 0.25,
            parse_code("3.25.1"): 0.1,
        }
        code, prob = hierarchical_select(dist, LevelThresholds(0.9, 0.45, 0.9))
        assert code == parse_code("3.24")
        assert prob == 0.2 + 0.25

    def test_scaling_keeps_argmax(self):
        dist = {parse_code("3.24.1"): 0.3, parse_code("3.24.2"): 0.2, parse_code("5.19.1"): 0.25}
        zero = LevelThresholds(0.0, 0.0, 0.0)
        base = hierarchical_select(dist, zero)[0]
        for c in (0.5, 0.1):
            scaled = {k: v * c for k, v in dist.items()}
            assert hierarchical_select(scaled, zero)[0] == base

    def test_empty_distribution(self):
        assert hierarchical_select({}, THR) is None


class TestVotes:
    def test_majority(self):
        t = track(
            entry(0, {"3.24": 1.0}, data="40"),
            entry(3, {"3.24": 1.0}, data="40"),
            entry(6, {"3.24": 1.0}, data="60"),
        )
        assert vote_associated_data(t) == "40"

    def test_no_data(self):
        t = track(entry(0, {"3.24": 1.0}))
        assert vote_associated_data(t) is None

    def test_tie_prefers_earliest(self):
        t = track(
            entry(0, {"3.24": 1.0}, data="40"),
            entry(3, {"3.24": 1.0}, data="60"),
        )
        assert vote_associated_data(t) == "40"


class TestRefineTracks:
    def test_accepted_track_emits_every_entry(self):
        t = track(*(entry(f, {"3.24": 0.9}) for f in range(5)))
        out = refine_tracks([t], THR)
        assert len(out) == 5
        assert all(d.code == parse_code("3.24") for d in out)
        assert all(d.confidence == pytest.approx(0.9) for d in out)

    def test_rejected_track_emits_nothing(self):
        t = track(entry(0, {"3.24.1": 0.1}), entry(3, {"5.19.1": 0.1}))
        assert refine_tracks([t], THR) == []

    def test_flickering_argmax_recovered_by_average(self):
        # per-frame argmax flips A,B,A but the average favors A
        a, b = "3.24.1", "3.24.2"
        t = track(
            entry(0, {a: 0.6, b: 0.4}),
            entry(3, {a: 0.4, b: 0.6}),
            entry(6, {a: 0.65, b: 0.35}),
        )
        out = refine_tracks([t], LevelThresholds(0.5, 0.5, 0.5))
        assert len(out) == 3
        assert all(d.code == parse_code(a) for d in out)

    def test_output_count_is_sum_of_accepted_lengths(self):
        good = track(*(entry(f, {"3.24": 0.9}) for f in (0, 1, 2, 3)), track_id=0)
        bad = track(entry(0, {"3.24": 0.01}), track_id=1)
        out = refine_tracks([good, bad], THR)
        assert len(out) == 4

    def test_votes_propagate(self):
        t = track(
            entry(0, {"3.24": 1.0}, data="40", temporary=True),
            entry(3, {"3.24": 1.0}, data="40", temporary=True),
            entry(6, {"3.24": 1.0}, data="60", temporary=False),
        )
        out = refine_tracks([t], THR)
        assert all(d.associated_data == "40" for d in out)
        assert all(d.temporary is True for d in out)

    def test_superclass_fallback_emits_pooled_confidence(self):
        t = track(entry(0, {"3.24.1": 0.3, "3.24.2": 0.3}))
        out = refine_tracks([t], THR)
        assert out[0].code == parse_code("3.24")
        assert out[0].confidence == pytest.approx(0.6)


def _validation_fixture():
    """Two tracks: one clean sign, one low-confidence noise track that
    scores negative unless a high specific threshold drops it."""
    sign_code = "3.24"
    clean = track(
        *(entry(f, {sign_code: 0.95}, box=(100, 100, 160, 160)) for f in (0, 1, 2)),
        track_id=0,
    )
    noise = track(
        *(entry(f, {"5.19.1": 0.4}, box=(400, 400, 460, 460)) for f in (0, 1, 2)),
        track_id=1,
    )
    annotations = [
        FrameAnnotations(
            frame_index=f,
            signs=(
                GroundTruthSign(
                    frame_index=f,
                    box=BoundingBox(100, 100, 160, 160),
                    code=parse_code(sign_code),
                ),
            ),
        )
        for f in (0, 1, 2)
    ]
    return [clean, noise], annotations


class TestGridSearch:
    def test_singleton_grid_echoes(self):
        tracks, anns = _validation_fixture()
        thr, score = grid_search_thresholds(
            tracks, anns, ([0.5], [0.5], [0.5]), ScoringConfig.offline()
        )
        assert thr == LevelThresholds(0.5, 0.5, 0.5)

    def test_high_threshold_drops_noise_track(self):
        tracks, anns = _validation_fixture()
        cfg = ScoringConfig.offline()

        def score_at(triple):
            refined = refine_tracks(tracks, LevelThresholds(*triple))
            grouped = {}
            for d in refined:
                grouped.setdefault(d.frame_index, []).append(d)
            return score_dataset(grouped, anns, cfg).total

        # the noise track (prob 0.4) passes at 0.1 and becomes 3 FPs
        assert score_at((0.9, 0.9, 0.9)) > score_at((0.1, 0.9, 0.9))

    def test_result_matches_exhaustive_enumeration(self):
        tracks, anns = _validation_fixture()
        cfg = ScoringConfig.offline()
        grid = ([0.1, 0.3, 0.6, 0.9], [0.2, 0.5, 0.8, 0.95], [0.1, 0.4, 0.7, 1.0])
        thr, best = grid_search_thresholds(tracks, anns, grid, cfg)

        def score_at(triple):
            refined = refine_tracks(tracks, LevelThresholds(*triple))
            grouped = {}
            for d in refined:
                grouped.setdefault(d.frame_index, []).append(d)
            return score_dataset(grouped, anns, cfg).total

        scored = {
            triple: score_at(triple) for triple in itertools.product(*grid)
        }
        expected_best = max(scored.values())
        winners = sorted(t for t, s in scored.items() if s == expected_best)
        assert best == expected_best
        assert (thr.thr_specific, thr.thr_level2, thr.thr_top) == winners[0]

    def test_empty_grid_rejected(self):
        tracks, anns = _validation_fixture()
        with pytest.raises(ValueError):
            grid_search_thresholds(tracks, anns, ([], [0.5], [0.5]), ScoringConfig.offline())


class TestThresholdRecord:
    def test_round_trip(self):
        thr = LevelThresholds(0.25, 0.5, 0.75)
        assert parse_thresholds(format_thresholds(thr)) == thr

    def test_bad_field_count(self):
        with pytest.raises(ValueError):
            parse_thresholds("0.5 0.5\n")

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            LevelThresholds(1.5, 0.5, 0.5)
