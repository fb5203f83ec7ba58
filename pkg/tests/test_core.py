import numpy as np
import pytest

from weakseg.core import (
    Dataset,
    FrameLogPosteriors,
    FrameSequence,
    LabelSet,
    Segmentation,
    Transcript,
    ValidationError,
    Video,
    load_dataset,
    save_dataset,
    validate_dataset,
)


def _dataset(rng):
    ls = LabelSet(("bg", "pour", "stir"), background_id=0)
    v1 = Video("v1", rng.normal(size=(6, 3)), (1, 2), np.array([1, 1, 1, 2, 2, 2]))
    v2 = Video("v2", rng.normal(size=(4, 3)), (0, 1, 0), np.array([0, 1, 1, 0]))
    return Dataset(ls, [v1, v2])


def test_well_formed_dataset_has_no_violations(rng):
    assert validate_dataset(_dataset(rng)) == []


def test_adjacent_repeat_reported_once(rng):
    d = _dataset(rng)
    d.videos[0].transcript = (1, 1)
    problems = validate_dataset(d)
    assert len(problems) == 1
    assert problems[0].startswith("v1: transcript")


def test_short_ground_truth_reported_once(rng):
    d = _dataset(rng)
    d.videos[1].ground_truth = np.array([0, 1, 1])
    problems = validate_dataset(d)
    assert len(problems) == 1
    assert "v2" in problems[0] and "ground_truth" in problems[0]


def test_other_violations_are_named(rng):
    d = _dataset(rng)
    d.videos[0].features[0, 0] = np.nan
    d.videos[1].transcript = (0, 7)
    problems = validate_dataset(d)
    assert any(p.startswith("v1: features") for p in problems)
    assert any(p.startswith("v2: transcript") for p in problems)


@pytest.mark.parametrize("names,bg", [((), None), (("a", "a"), None), (("a", "b"), 2), (("a b",), None)])
def test_label_set_rejects(names, bg):
    with pytest.raises(ValidationError):
        LabelSet(names, bg)


def test_transcript_invariants():
    assert len(Transcript((0, 1, 0))) == 3
    with pytest.raises(ValidationError):
        Transcript(())
    with pytest.raises(ValidationError):
        Transcript((2, 2))
    with pytest.raises(ValidationError):
        Transcript((0, 1)).check_classes(1)


def test_segmentation_roundtrip_and_cuts():
    s = Segmentation((0, 2, 1), (3, 1, 2))
    assert s.T == 6 and s.cuts == (0, 3, 4, 6)
    assert list(s.to_frames()) == [0, 0, 0, 2, 1, 1]
    assert Segmentation.from_frames(s.to_frames()) == s
    assert Segmentation.from_cuts((0, 2, 1), (0, 3, 4, 6)) == s
    for bad in [((0, 1), (1,)), ((0, 1), (0, 2)), ((1, 1), (1, 1))]:
        with pytest.raises(ValidationError):
            Segmentation(*bad)


def test_frame_sequence_rejects_non_finite():
    with pytest.raises(ValidationError):
        FrameSequence(np.array([[1.0, np.inf]]), "x")
    with pytest.raises(ValidationError):
        FrameSequence(np.zeros((0, 2)), "x")
    fs = FrameSequence(np.ones((2, 3)), "x")
    with pytest.raises(ValueError):
        fs.features[0, 0] = 5.0


def test_log_posteriors_must_normalize():
    FrameLogPosteriors(np.log([[0.25, 0.75], [1.0, 0.0 + 1e-300]]))
    FrameLogPosteriors(np.array([[0.0, -np.inf]]))
    with pytest.raises(ValidationError):
        FrameLogPosteriors(np.log([[0.5, 0.6]]))
    with pytest.raises(ValidationError):
        FrameLogPosteriors(np.array([[np.nan, 0.0]]))


def test_file_roundtrip_is_exact(tmp_path, rng):
    d = _dataset(rng)
    d.videos[0].features[2, 1] = 1.0 / 3.0
    save_dataset(d, tmp_path)
    back = load_dataset(tmp_path)
    assert back.label_set == d.label_set
    assert [v.video_id for v in back] == ["v1", "v2"]
    for a, b in zip(d.videos, back.videos):
        assert a.transcript == b.transcript
        assert np.array_equal(a.ground_truth, b.ground_truth)
        assert np.max(np.abs(a.features - b.features)) <= 1e-12
    assert validate_dataset(back) == []


def test_ground_truth_optional_on_disk(tmp_path, rng):
    d = _dataset(rng)
    d.videos[1].ground_truth = None
    save_dataset(d, tmp_path)
    assert load_dataset(tmp_path).videos[1].ground_truth is None
