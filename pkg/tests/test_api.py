import numpy as np

from app.services.simulation import simulate


def _payload(**options):
    frame = simulate("hetero1d", n=150, seed=3)
    return {"x": frame["x"].tolist(), "y": frame["y"].tolist(), "nseg": 12, **options}


class TestFits:
    def test_fit_1d(self, client):
        r = client.post("/api/v1/fits", json=_payload(adaptive_p=3))
        assert r.status_code == 200
        body = r.json()
        assert len(body["fitted"]) == 150
        assert body["fitted"] == body["linear_predictor"]
        assert body["report"]["n_variance_components"] == 3
        assert body["report"]["family"] == "gaussian"
        assert len(body["lambda_field"]) == 15 - 2
        assert all(p["value"] > 0 and p["x2"] is None for p in body["lambda_field"])

    def test_poisson(self, client):
        frame = simulate("poisson_peaks", n=200, seed=1)
        payload = {"x": frame["x"].tolist(), "y": frame["y"].tolist(), "family": "poisson", "nseg": 20, "adaptive_p": 3}
        r = client.post("/api/v1/fits", json=payload)
        assert r.status_code == 200
        body = r.json()
        assert np.allclose(np.exp(body["linear_predictor"]), body["fitted"])
        assert body["report"]["deviance"] > 0

    def test_two_dimensional(self, client):
        frame = simulate("surface2d", n=300, seed=1)
        payload = {
            "x": frame["x"].tolist(),
            "x2": frame["x2"].tolist(),
            "y": frame["y"].tolist(),
            "nseg2d": [4, 4],
            "adaptive_p2d": [2, 1, 1, 2],
            "max_iter": 300,
        }
        r = client.post("/api/v1/fits", json=payload)
        assert r.status_code == 200
        body = r.json()
        assert body["report"]["dimension"] == 2
        assert body["report"]["n_variance_components"] == 2 * 1 + 1 * 2
        assert {p["direction"] for p in body["lambda_field"]} == {1, 2}
        assert all(p["x2"] is not None for p in body["lambda_field"])

    def test_mismatched_lengths(self, client):
        payload = _payload()
        payload["y"] = payload["y"][:-1]
        r = client.post("/api/v1/fits", json=payload)
        assert r.status_code == 422

    def test_invalid_smoothing_basis(self, client):
        r = client.post("/api/v1/fits", json=_payload(adaptive_p=100))
        assert r.status_code == 422
        assert "p <= c - q" in r.json()["detail"]

    def test_unknown_family(self, client):
        r = client.post("/api/v1/fits", json=_payload(family="binomial"))
        assert r.status_code == 422

    def test_row_cap(self, client, monkeypatch):
        monkeypatch.setenv("SOPSPLINE_MAX_REQUEST_ROWS", "100")
        r = client.post("/api/v1/fits", json=_payload())
        assert r.status_code == 413


class TestSimulations:
    def test_scenarios(self, client):
        r = client.get("/api/v1/simulations/scenarios")
        assert r.json() == ["hetero1d", "poisson_peaks", "surface2d"]

    def test_simulate(self, client):
        r = client.post("/api/v1/simulations", json={"scenario": "surface2d", "n": 50, "seed": 7})
        assert r.status_code == 200
        body = r.json()
        assert body["columns"] == ["x", "x2", "y", "truth"]
        assert len(body["rows"]) == 50
        again = client.post("/api/v1/simulations", json={"scenario": "surface2d", "n": 50, "seed": 7}).json()
        assert again["rows"] == body["rows"]

    def test_unknown_scenario(self, client):
        r = client.post("/api/v1/simulations", json={"scenario": "spiral"})
        assert r.status_code == 404

    def test_too_small(self, client):
        r = client.post("/api/v1/simulations", json={"scenario": "hetero1d", "n": 3})
        assert r.status_code == 422
