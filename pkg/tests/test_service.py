"""Service tests: every endpoint end to end over an in-process ASGI client."""

import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from pbopt.qpbf import Labeling, Qpbf, brute_force_min, evaluate, qpbf_to_text
from pbopt.restore import make_glyph_set, read_pbm, write_pbm
from pbopt.service import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def pbm_text(raster):
    buf = io.StringIO()
    write_pbm(raster, buf)
    return buf.getvalue()


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["version"]


class TestSolve:
    def test_essp_small_instance_optimal(self, client):
        f = Qpbf(3, unary=[(0.0, 2.0), (0.0, -1.0), (0.0, 0.5)],
                 pairwise={(0, 1): (0.0, 0.0, 0.0, -3.0),
                           (1, 2): (0.0, 1.0, 0.0, -2.0)})
        r = client.post("/solve", json={"qpbf": qpbf_to_text(f)})
        assert r.status_code == 200
        body = r.json()
        _, best_e = brute_force_min(f)
        assert body["energy"] == pytest.approx(best_e, abs=1e-9)
        assert body["solver"] == "essp"
        lab = Labeling(body["labeling"])
        assert evaluate(f, lab) == pytest.approx(body["energy"], abs=1e-9)
        assert body["trace"]

    def test_init_prefixes_chain(self, client):
        f = Qpbf(2, unary=[(0.0, -1.0), (0.0, 1.0)],
                 pairwise={(0, 1): (0.0, 0.0, 0.0, -3.0)})
        r = client.post("/solve", json={"qpbf": qpbf_to_text(f),
                                        "solver": "essp", "init": "bp"})
        assert r.status_code == 200
        assert r.json()["solver"] == "bp+essp"

    def test_qpbo_reports_labeled_fraction(self, client):
        f = Qpbf(2, unary=[(0.0, 1.0), (0.0, -2.0)],
                 pairwise={(0, 1): (0.0, 0.5, 0.5, 0.0)})
        r = client.post("/solve", json={"qpbf": qpbf_to_text(f),
                                        "solver": "qpbo"})
        assert r.status_code == 200
        body = r.json()
        assert body["labeled_fraction"] is not None
        assert body["certified"] is None

    def test_bad_qpbf_is_400(self, client):
        r = client.post("/solve", json={"qpbf": "not a qpbf"})
        assert r.status_code == 400
        assert "detail" in r.json()

    def test_unknown_solver_is_400(self, client):
        f = Qpbf(1, unary=[(0.0, -1.0)])
        r = client.post("/solve", json={"qpbf": qpbf_to_text(f),
                                        "solver": "warp"})
        assert r.status_code == 400

    def test_reserved_solver_opts_is_400(self, client):
        f = Qpbf(1, unary=[(0.0, -1.0)])
        r = client.post("/solve", json={"qpbf": qpbf_to_text(f),
                                        "solver_opts": {"essp": {"seed": 1}}})
        assert r.status_code == 400

    def test_malformed_body_is_422(self, client):
        r = client.post("/solve", json={"solver": "essp"})
        assert r.status_code == 422


class TestSynth:
    def test_generate_and_measure_round_trip(self, client):
        r = client.post("/synth/generate",
                        json={"n": 30, "cr": 0.4, "sr": 0.3, "ug": 0.1,
                              "seed": 5})
        assert r.status_code == 200
        body = r.json()
        assert body["measured"]["cr"] == pytest.approx(0.4, abs=0.05)
        m = client.post("/synth/measure", json={"qpbf": body["qpbf"]})
        assert m.status_code == 200
        assert m.json() == body["measured"]

    def test_generate_deterministic(self, client):
        payload = {"n": 20, "cr": 0.3, "sr": 0.5, "ug": 0.0, "seed": 9}
        a = client.post("/synth/generate", json=payload)
        b = client.post("/synth/generate", json=payload)
        assert a.json() == b.json()

    def test_bad_factor_is_400(self, client):
        r = client.post("/synth/generate",
                        json={"n": 10, "cr": 1.5, "sr": 0.0, "ug": 0.0})
        assert r.status_code == 400


class TestRestore:
    def make_model(self, client):
        g = make_glyph_set(width=5, height=4, num_images=8, seed=2)
        glyphs = [pbm_text(img) for img in g.images]
        r = client.post("/restore/train", json={"glyphs": glyphs})
        assert r.status_code == 200
        return g, r.json()["model"]

    def test_train_payload_shape(self, client):
        g, model = self.make_model(client)
        assert model["width"] == 5
        assert model["height"] == 4
        assert model["floor"] == 0.1
        n = g.num_pixels
        assert len(model["pairs"]) == n * (n - 1) // 2

    def test_train_dimension_mismatch_is_400(self, client):
        a = np.zeros((2, 2), dtype=np.int8)
        b = np.zeros((3, 2), dtype=np.int8)
        r = client.post("/restore/train",
                        json={"glyphs": [pbm_text(a), pbm_text(b)]})
        assert r.status_code == 400

    def test_train_empty_is_400(self, client):
        r = client.post("/restore/train", json={"glyphs": []})
        assert r.status_code == 400

    def test_run_round_trip(self, client):
        g, model = self.make_model(client)
        noisy = pbm_text(g.images[0])
        r = client.post("/restore/run",
                        json={"model": model, "noisy": noisy,
                              "solver": "icm", "seed": 1})
        assert r.status_code == 200
        body = r.json()
        restored = read_pbm(io.StringIO(body["restored"]))
        assert restored.shape == (4, 5)
        assert body["lower_bound"] <= body["energy"] + 1e-9
        assert body["energy"] <= body["noisy_energy"] + 1e-9

    def test_run_bad_model_is_400(self, client):
        r = client.post("/restore/run",
                        json={"model": {"width": 2}, "noisy": "P1\n1 1\n0\n"})
        assert r.status_code == 400


class TestBench:
    def test_run_and_plot(self, client, tmp_path):
        out = tmp_path / "bench"
        config = {"n": 12, "cr": [0.4], "sr": [0.5], "ug": [0.0],
                  "instances_per_cell": 2, "solvers": ["icm", "bp"],
                  "budget": 20.0, "seed": 3, "out": str(out)}
        r = client.post("/bench/run", json={"config": config})
        assert r.status_code == 200
        body = r.json()
        assert (out / "traces.csv").exists()
        assert (out / "traces.json").exists()
        assert (out / "summary.json").exists()
        assert any(name.endswith(".svg") for name in body["written"])
        assert body["summary"]["cells"]

        p = client.post("/bench/plot",
                        json={"traces_dir": str(out), "factor": "sr",
                              "value": 0.5})
        assert p.status_code == 200
        plot = p.json()
        assert plot["solvers"] == ["bp", "icm"]
        svg = (out / "bench_sr_0.5.svg").read_text()
        assert svg.startswith("<svg")

    def test_bad_config_is_400(self, client, tmp_path):
        r = client.post("/bench/run",
                        json={"config": {"solvers": ["nope"]}})
        assert r.status_code == 400
        r = client.post("/bench/run",
                        json={"config": {"fanciness": 1}})
        assert r.status_code == 400

    def test_plot_missing_dir_is_400(self, client, tmp_path):
        r = client.post("/bench/plot",
                        json={"traces_dir": str(tmp_path / "nope"),
                              "factor": "sr", "value": 0.5})
        assert r.status_code == 400
