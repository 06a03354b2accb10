import os
import pathlib

import pytest

import busfeed

SOURCE = pathlib.Path(os.environ.get("BUSFEED_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
SCENARIOS = SOURCE / "scenarios"


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "small.cfg"
    cfg.write_text(
        "\n".join(
            [
                "seed = 7",
                f"sim.route = {SCENARIOS / 'route1.csv'}",
                f"sim.route = {SCENARIOS / 'route2.csv'}",
                "sim.buses_per_route = 1",
                "sim.duration_hours = 4",
                "train.mode = stop",
                "train.hidden = 16",
                "window.stride = 3",
                "train.epochs = 60",
                "train.lr = 1e-2",
                "cluster.min_size = 2",
            ]
        )
        + "\n"
    )
    ok = busfeed.run_pipeline(str(cfg), out_dir=str(out / "out"))
    return cfg, out / "out", ok


def test_parse_and_clean_drop_duplicates():
    text = (
        "latitude,longitude,speed,unit_id,time\n"
        "42.35,13.40,20,081101,2019-12-09 08:00:00\n"
        "42.35,13.40,20,081101,2019-12-09 08:00:10\n"
        "42.351,13.401,20,081101,2019-12-09 08:00:20\n"
    )
    records, report = busfeed.parse_csv(text)
    assert len(records) == 3 and report["removed_malformed"] == 0
    kept, report = busfeed.clean(records)
    assert len(kept) == 2
    assert report["removed_duplicates"] == 1


def test_record_rejects_out_of_range_latitude():
    with pytest.raises(ValueError):
        busfeed.GpsRecord(91.0, 13.4, 10.0, "u", "2019-12-09 08:00:00")


def test_pipeline_writes_valid_feed(small_run):
    _, out, ok = small_run
    assert ok
    for name in ["model.bin", "loss_trace.csv", "gtfs.zip", "validation.txt", "manifest.txt"]:
        assert (out / name).exists(), name
    report = busfeed.validate_gtfs(str(out / "gtfs.zip"))
    assert report["valid"] and report["errors"] == []


def test_model_predicts_from_raw_window(small_run):
    _, out, _ = small_run
    model = busfeed.Model.load(str(out / "model.bin"))
    assert model.has_stop_head
    window = [(42.35 + 1e-4 * i, 13.40, 20.0) for i in range(model.window_length)]
    lat, lon, sp = busfeed.predict_next(model, window)
    assert 42.0 < lat < 43.0 and 13.0 < lon < 14.0
    path = busfeed.rollout(model, window, 3)
    assert len(path) == 3
    with pytest.raises(ValueError):
        busfeed.predict_next(model, window[:-1])


def test_stage_failure_names_stage(tmp_path):
    with pytest.raises(busfeed.StageError, match="train"):
        busfeed.train("", out_dir=str(tmp_path))
