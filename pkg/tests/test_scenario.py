import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wireid.scenario import (
    GenerationParams,
    ParameterError,
    Scenario,
    ScenarioFormatError,
    ScenarioIntegrityError,
    generate_scenario,
    load_scenario,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
)

SMALL = GenerationParams(n_cameras=3, n_identities=6, world_size=120.0, visits_per_identity=3)


@pytest.fixture(scope="module")
def reference():
    return generate_scenario(GenerationParams(), 1)


def test_phone_owner_count():
    s = generate_scenario(GenerationParams(n_cameras=6, n_identities=40, phone_fraction=0.8), 3)
    assert len(s.trajectories) == 32
    assert len(set(s.gt_identity_of_trajectory.values())) == 32


def test_noiseless_descriptors_identical_per_identity():
    s = generate_scenario(GenerationParams(app_noise=0.0, corrupt_prob=0.0, camera_bias=0.0), 2)
    D, ids = s.descriptors(), s.video_identities()
    for ident in np.unique(ids):
        rows = D[ids == ident]
        np.testing.assert_allclose(rows, np.broadcast_to(rows[0], rows.shape), atol=1e-15)


def test_same_seed_same_bytes():
    assert scenario_to_json(generate_scenario(SMALL, 7)) == scenario_to_json(generate_scenario(SMALL, 7))
    assert scenario_to_json(generate_scenario(SMALL, 7)) != scenario_to_json(generate_scenario(SMALL, 8))


def test_invariants(reference):
    s = reference
    assert [c.id for c in s.cameras] == list(range(6))
    assert [v.id for v in s.videos] == list(range(len(s.videos)))
    norms = np.linalg.norm(s.descriptors(), axis=1)
    assert np.all(np.abs(norms - 1.0) <= 1e-9)
    assert all(v.interval[0] <= v.interval[1] for v in s.videos)
    for t in s.trajectories:
        ts, _, _ = t.arrays()
        assert len(ts) >= 2 and np.all(np.diff(ts) > 0)
    pos = np.array([c.position for c in s.cameras])
    d = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))
    assert d[~np.eye(6, dtype=bool)].min() >= 50.0 - 1e-6
    assert 250 <= len(s.videos) <= 350


def test_round_trip(tmp_path, reference):
    path = tmp_path / "s.json"
    save_scenario(reference, path)
    assert load_scenario(path) == reference


def test_round_trip_without_trajectories(tmp_path):
    s = generate_scenario(GenerationParams(phone_fraction=0.0, n_identities=5, n_cameras=3), 4)
    assert s.trajectories == ()
    save_scenario(s, tmp_path / "s.json")
    assert load_scenario(tmp_path / "s.json") == s


def test_strip_ground_truth_round_trip():
    s = generate_scenario(SMALL, 1).strip_ground_truth()
    back = scenario_from_json(scenario_to_json(s))
    assert not back.has_ground_truth
    assert back == s


def _doc(s: Scenario) -> dict:
    return json.loads(scenario_to_json(s))


def test_unknown_camera_is_integrity_error():
    doc = _doc(generate_scenario(SMALL, 1))
    doc["videos"][0]["camera_id"] = 99
    with pytest.raises(ScenarioIntegrityError, match=r"videos\[0\].camera_id=99"):
        scenario_from_json(json.dumps(doc))


def test_malformed_json_reports_position():
    text = scenario_to_json(generate_scenario(SMALL, 1))
    broken = text.replace('"videos":[', '"videos":[,', 1)
    with pytest.raises(ScenarioFormatError, match=r"<string>:\d+:\d+"):
        scenario_from_json(broken)


def test_missing_field_names_path():
    doc = _doc(generate_scenario(SMALL, 1))
    del doc["trajectories"][1]["samples"]
    with pytest.raises(ScenarioFormatError, match=r"trajectories\[1\]: missing field 'samples'"):
        scenario_from_json(json.dumps(doc))


def test_non_increasing_times_rejected():
    doc = _doc(generate_scenario(SMALL, 1))
    doc["trajectories"][0]["samples"][1][0] = doc["trajectories"][0]["samples"][0][0]
    with pytest.raises(ScenarioFormatError, match="strictly increase"):
        scenario_from_json(json.dumps(doc))


def test_wrong_version_rejected():
    doc = _doc(generate_scenario(SMALL, 1))
    doc["format_version"] = 99
    with pytest.raises(ScenarioFormatError, match="format_version"):
        scenario_from_json(json.dumps(doc))


@pytest.mark.parametrize("field,value", [
    ("n_cameras", 0), ("view_radius", -1.0), ("phone_fraction", 1.5), ("corrupt_prob", -0.1),
])
def test_bad_params_name_the_field(field, value):
    with pytest.raises(ParameterError, match=field):
        generate_scenario(GenerationParams(**{field: value}), 0)


def test_unknown_param_rejected():
    with pytest.raises(ParameterError, match="bogus"):
        GenerationParams.from_dict({"bogus": 1})


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), phones=st.sampled_from([0.0, 0.5, 1.0]))
def test_generated_scenarios_validate_and_round_trip(seed, phones):
    p = GenerationParams(n_cameras=3, n_identities=5, world_size=120.0, visits_per_identity=2,
                         phone_fraction=phones)
    s = generate_scenario(p, seed)
    assert len(s.trajectories) == math.floor(phones * 5)
    assert scenario_from_json(scenario_to_json(s)) == s
