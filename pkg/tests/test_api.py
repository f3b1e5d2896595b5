import numpy as np
import pytest
from fastapi.testclient import TestClient

from mcadetect.api import RunRequest, RunResponse, app, execute
from mcadetect.errors import ConfigError

client = TestClient(app)

SMALL = 'topology = "digital"\n[sweep]\nvalues = [12.0]\n[stop]\nmax_frames = 100\n'


def test_health_and_recipes():
    assert client.get("/health").json()["status"] == "ok"
    names = {r["name"] for r in client.get("/recipes").json()}
    assert {"fig3", "fig9", "timing"} <= names


def test_run_round_trips_through_json():
    resp = client.post("/runs", json={"config_toml": SMALL, "seed": 3})
    assert resp.status_code == 200
    body = RunResponse.model_validate(resp.json())
    assert body.seed == 3 and body.results[0].rows[0].seed == 3
    # NaN hardware columns survive the JSON round trip
    assert np.isnan(body.results[0].rows[0].power_w)
    assert body.results[0].csv == execute(RunRequest(config_toml=SMALL, seed=3)).results[0].csv


def test_config_errors_are_400():
    r = client.post("/runs", json={"config_toml": "[scenario]\nK = 0\n"})
    assert r.status_code == 400 and r.json()["kind"] == "config"
    r = client.post("/runs", json={"config_toml": SMALL, "curves": ["a"]})
    assert r.status_code == 400
    r = client.post("/runs", json={"recipe": "nope"})
    assert r.status_code == 400
    assert client.post("/runs", json={"seed": -1}).status_code == 422


def test_numerical_errors_are_500(monkeypatch):
    from mcadetect import experiment

    def boom(*a, **k):
        raise experiment.SimulationError("forced")

    monkeypatch.setattr(experiment, "circuit_estimate", boom)
    r = client.post("/runs", json={"config_toml": "[stop]\nmax_frames = 10\n[metrics]\npower = false\n"})
    assert r.status_code == 500 and r.json()["kind"] == "numerical"


@pytest.mark.parametrize("variant", ["ZF", "MMSE"])
def test_detect_endpoint(variant):
    r = client.post("/detect", json={"R": 16, "K": 2, "variant": variant, "rho": 0.0})
    assert r.status_code == 200
    body = r.json()
    np.testing.assert_allclose(body["s_hat"], body["s"], atol=1e-9)
    assert client.post("/detect", json={"R": 2, "K": 4}).status_code == 400


def test_execute_rejects_curves_without_recipe():
    with pytest.raises(ConfigError):
        execute(RunRequest(config_toml=SMALL, curves=["x"]))
