import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamtrack import records
from beamtrack.errors import DomainError
from beamtrack.scene import PRESETS, generate_episodes, make_scenario
from beamtrack.tracker.data import GRID_PRESETS, Labeler, encode_episode, label_episode
from beamtrack.tracker.store import (
    label_sequences,
    load_samples,
    read_encoded,
    read_labels,
    resolve_grid,
    write_encoded,
    write_labels,
)


@pytest.fixture(scope="module")
def episodes():
    sc = make_scenario("urban_canyon")
    return generate_episodes(sc, PRESETS["t001"], 3, seed=11)


class TestDumps:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_round_trip(self, x):
        assert json.loads(records.dumps(x)) == x

    def test_seventeen_digits(self):
        assert records.dumps(0.1) == "0.10000000000000001"
        assert records.dumps(1.0) == "1.0"
        assert records.dumps(1e300) == "1.0000000000000001e+300"

    def test_structures(self):
        s = records.dumps({"a": [1, 2.5, True, None, "x"], 3: {"b": False}})
        assert json.loads(s) == {"a": [1, 2.5, True, None, "x"], "3": {"b": False}}

    def test_numpy_scalars(self):
        assert json.loads(records.dumps([np.float64(0.5), np.int64(7)])) == [0.5, 7]

    @pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
    def test_non_finite(self, bad):
        with pytest.raises(DomainError):
            records.dumps(bad)

    def test_unknown_type(self):
        with pytest.raises(TypeError):
            records.dumps(object())


class TestEpisodeRecords:
    def test_round_trip_exact(self, episodes, tmp_path):
        ep = episodes[0]
        path = tmp_path / records.episode_filename(ep.episode_id)
        records.write_episode(path, ep)
        back = records.read_episode(path, ep.scenario)
        assert back == ep

    def test_schema(self, episodes, tmp_path):
        path = tmp_path / "e.jsonl"
        records.write_episode(path, episodes[1])
        lines = path.read_text().splitlines()
        assert len(lines) == len(episodes[1].scenes)
        d = json.loads(lines[0])
        assert set(d) == {"scene_id", "t_ms", "episode_id", "vehicles", "rays", "serving_bs"}
        assert d["episode_id"] == episodes[1].episode_id
        assert set(d["vehicles"][0]) == {"vehicle_id", "position", "velocity", "heading", "bbox", "is_receiver"}
        ray = next(r for rays in d["rays"].values() for r in rays)
        assert set(ray) == {"gain_re", "gain_im", "aod_az", "aod_el", "aoa_az", "aoa_el", "delay_s"}

    def test_mixed_episode_ids(self, episodes, tmp_path):
        a = records.dumps(records.scene_record(episodes[0].scenes[0], 0))
        b = records.dumps(records.scene_record(episodes[0].scenes[1], 1))
        (tmp_path / "bad.jsonl").write_text(a + "\n" + b + "\n")
        with pytest.raises(DomainError):
            records.read_episode(tmp_path / "bad.jsonl", episodes[0].scenario)

    def test_dataset_round_trip(self, episodes, tmp_path):
        records.write_dataset(tmp_path, episodes, {"kind": "urban_canyon", "preset": "t001"})
        meta, back = records.read_dataset(tmp_path)
        assert meta["episodes"] == [f"episode_{i:05d}.jsonl" for i in range(3)]
        assert back == episodes

    def test_static_dataset_keeps_speed(self, tmp_path):
        sc = make_scenario("urban_canyon")
        eps = generate_episodes(sc, PRESETS["t001"], 1, seed=0, static=True)
        records.write_dataset(tmp_path, eps, {"kind": "urban_canyon"})
        _, back = records.read_dataset(tmp_path)
        assert back[0].scenario.speed_range == (0.0, 0.0)
        assert back == eps


class TestStore:
    def test_encoded_round_trip(self, episodes, tmp_path):
        grid = GRID_PRESETS["urban_canyon"]
        enc = {e.episode_id: encode_episode(e, "gnss", grid) for e in episodes}
        write_encoded(tmp_path, "gnss", grid, enc, {e.episode_id: e.receiver_ids for e in episodes})
        mode, back, receivers = read_encoded(tmp_path)
        assert mode == "gnss"
        assert set(back) == set(enc)
        for k in enc:
            assert back[k].dtype == np.int8
            np.testing.assert_array_equal(back[k], enc[k])
        assert receivers[0] == episodes[0].receiver_ids

    def test_labels_and_samples(self, episodes, tmp_path):
        grid = GRID_PRESETS["urban_canyon"]
        enc = {e.episode_id: encode_episode(e, "gnss", grid) for e in episodes}
        write_encoded(tmp_path, "gnss", grid, enc, {e.episode_id: e.receiver_ids for e in episodes})
        lab = Labeler.default()
        rows = [(e.episode_id, r, s, out[0], out[1])
                for e in episodes for r, seq in label_episode(e, lab).items()
                for s, out in enumerate(seq) if out is not None]
        write_labels(tmp_path / "labels.csv", rows)
        assert read_labels(tmp_path / "labels.csv") == rows
        seqs = label_sequences(rows, enc, {e.episode_id: e.receiver_ids for e in episodes})
        assert all(len(v) == 10 for per in seqs.values() for v in per.values())
        ss = load_samples(tmp_path, 3)
        assert len(ss) <= 3 * 2 * 7
        assert ss.input_shape == (1, 20, 200)

    def test_bad_label_header(self, tmp_path):
        (tmp_path / "l.csv").write_text("a,b\n1,2\n")
        with pytest.raises(DomainError):
            read_labels(tmp_path / "l.csv")

    def test_grid_resolution(self, tmp_path):
        assert resolve_grid("auto", "roundabout") is GRID_PRESETS["roundabout"]
        cfg = {"voxel": {"origin": [0, 0, 0], "cell_size": 2.0, "dims": [10, 100, 5]},
               "coord": {"origin": [0, 0], "cell_size": 2.0, "dims": [10, 100]}, "lidar_azimuths": 90}
        (tmp_path / "g.json").write_text(json.dumps(cfg))
        g = resolve_grid(str(tmp_path / "g.json"), "urban_canyon")
        assert g.voxel.dims == (10, 100, 5) and g.lidar_azimuths == 90
        (tmp_path / "bad.json").write_text(json.dumps({"voxel": {}}))
        with pytest.raises(DomainError):
            resolve_grid(str(tmp_path / "bad.json"), "urban_canyon")
