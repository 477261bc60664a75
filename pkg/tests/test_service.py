from __future__ import annotations

import json
from contextlib import contextmanager

import pytest
from fastapi.testclient import TestClient

from respnet.config import ServiceConfig, load_config
from respnet.demo import DEMO_REGIONS, seed_demo
from respnet.errors import ConfigInvalid
from respnet.scoring import BandPolicy
from respnet.service import create_app
from respnet.storage import Store


@contextmanager
def running_app(data_dir, **config_kwargs):
    config = ServiceConfig(data_dir=data_dir, **config_kwargs)
    app = create_app(config)
    with TestClient(app) as client:
        yield client


@pytest.fixture
def seeded_dir(tmp_path):
    data_dir = tmp_path / "data"
    with Store(data_dir) as store:
        seed_demo(store)
    return data_dir


def post(client, path, body):
    response = client.post(path, json=body)
    assert response.status_code == 200, response.text
    return response.json()


EVENT = {
    "event_id": "ev-1", "timestamp": "2024-01-05T10:00:00Z", "item_id": "it-0001",
    "kind": "manual_deduction", "points": -5, "reason": "blocked exit",
    "source": "manual",
}


class TestGraphEndpoints:
    def test_build_graph_over_http(self, tmp_path):
        with running_app(tmp_path / "data") as client:
            company = post(client, "/graph/companies", {"name": "Co"})
            person = post(client, "/graph/personnel",
                          {"company_id": company["id"], "name": "P", "role": "leader"})
            enterprise = post(client, "/graph/enterprises",
                              {"company_id": company["id"], "name": "E",
                               "category": "other"})
            station = post(client, "/graph/stations",
                           {"enterprise_id": enterprise["id"], "name": "S",
                            "personnel_id": person["id"]})
            rlist = post(client, "/graph/lists",
                         {"station_id": station["id"], "weight": 1})
            item = post(client, "/graph/items",
                        {"list_id": rlist["id"], "description": "duty",
                         "legal_basis": "reg", "weight": 2})
            dump = client.get("/graph").json()
            assert [it["id"] for it in dump["items"]] == [item["id"]]
            assert client.get("/graph/validate").json() == {"violations": []}

    def test_error_mapping(self, tmp_path):
        with running_app(tmp_path / "data") as client:
            response = client.post("/graph/stations",
                                   json={"enterprise_id": "E99", "name": "S",
                                         "personnel_id": "p"})
            assert response.status_code == 404
            assert response.json()["code"] == "unknown_parent"
            response = client.post("/graph/companies", json={"name": ""})
            assert response.status_code == 400
            assert response.json()["code"] == "invalid_spec"

    def test_templates_and_derive(self, seeded_dir):
        with running_app(seeded_dir) as client:
            body = {"station_id": "st-mall-lobby", "template_id": "tmpl-mall"}
            first = post(client, "/graph/derive", body)
            second = post(client, "/graph/derive", body)
            assert first == second  # idempotent


class TestEventIngestion:
    def test_duplicate_event_reports_deduplicated(self, seeded_dir):
        with running_app(seeded_dir) as client:
            first = post(client, "/events", EVENT)
            assert first == {"event_id": "ev-1", "deduplicated": False}
            second = post(client, "/events", EVENT)
            assert second == {"event_id": "ev-1", "deduplicated": True}

    def test_unknown_item_404(self, seeded_dir):
        with running_app(seeded_dir) as client:
            response = client.post("/events", json={**EVENT, "item_id": "ghost"})
            assert response.status_code == 404
            assert response.json()["code"] == "unknown_item"

    def test_sign_violation_400(self, seeded_dir):
        with running_app(seeded_dir) as client:
            response = client.post("/events", json={**EVENT, "points": 5})
            assert response.status_code == 400

    def test_reading_flow(self, seeded_dir):
        with running_app(seeded_dir) as client:
            body = {"reading_id": "rd-1", "sensor_id": "chem-press-01",
                    "metric": "pressure", "value": 1.4, "unit": "MPa",
                    "timestamp": "2024-01-05T08:00:00Z"}
            first = post(client, "/readings", body)
            assert first["deduplicated"] is False
            assert first["events"] == ["tb-rule-press-high-rd-1"]
            second = post(client, "/readings", body)
            assert second == {"reading_id": "rd-1", "deduplicated": True, "events": []}
            mismatch = client.post("/readings", json={**body, "reading_id": "rd-2",
                                                      "unit": "kPa"})
            assert mismatch.status_code == 400
            assert mismatch.json()["code"] == "unit_mismatch"

    def test_rule_registration(self, seeded_dir):
        with running_app(seeded_dir) as client:
            rule = {"rule_id": "r-new", "sensor_id": "s9", "metric": "pressure",
                    "comparator": "gt", "critical_value": 2.0, "unit": "MPa",
                    "deduction_mode": "once_per_breach", "penalty_points": 5,
                    "target_item_id": "it-0001"}
            assert post(client, "/rules", rule) == {"rule_id": "r-new"}
            bad = client.post("/rules", json={**rule, "penalty_points": 0})
            assert bad.status_code == 400


class TestQueries:
    def close_days(self, client, days):
        for day in days:
            post(client, "/admin/close-day", {"date": day})

    def test_fresh_seed_scores_100(self, seeded_dir):
        with running_app(seeded_dir) as client:
            self.close_days(client, ["2024-01-01", "2024-01-02"])
            series = client.get("/scores/station/st-mall-lobby",
                                params={"from": "2024-01-01", "to": "2024-01-02"}).json()
            assert [p["score"] for p in series["points"]] == [100.0, 100.0]

    def test_series_defaults_to_closed_range(self, seeded_dir):
        with running_app(seeded_dir) as client:
            self.close_days(client, ["2024-01-01", "2024-01-02", "2024-01-03"])
            series = client.get("/scores/enterprise/en-mall").json()
            assert len(series["points"]) == 3

    def test_snapshot_fetch_and_missing(self, seeded_dir):
        with running_app(seeded_dir) as client:
            self.close_days(client, ["2024-01-01"])
            snap = client.get("/snapshots/2024-01-01").json()
            assert snap["date"] == "2024-01-01"
            assert set(snap) == {"date", "item_scores", "list_scores",
                                 "station_scores", "enterprise_scores", "reasons"}
            missing = client.get("/snapshots/2024-01-09")
            assert missing.status_code == 404
            assert missing.json()["code"] == "missing_snapshot"

    def test_reminders_and_policy_override(self, seeded_dir):
        with running_app(seeded_dir) as client:
            # it-0001 weighs 0.5 in a 0.75-weight list: 100 points down
            # drives st-mall-lobby to 0.75*50 + 0.25*100 = 62.5
            post(client, "/events", {**EVENT, "points": -100})
            reminders = client.get("/reminders", params={"date": "2024-01-31"}).json()
            assert reminders["reminders"] == [
                {"personnel_id": "pe-rivera", "subject_id": "st-mall-lobby",
                 "score": 62.5}]
            # tighter threshold pulls in more stations, still sorted worst-first
            strict = client.get("/reminders", params={
                "date": "2024-01-31", "reminder_threshold": 100}).json()
            scores = [r["score"] for r in strict["reminders"]]
            assert len(scores) >= 2
            assert scores == sorted(scores)
            assert strict["reminders"][0]["subject_id"] == "st-mall-lobby"

    def test_accountability(self, seeded_dir):
        with running_app(seeded_dir) as client:
            post(client, "/events", {**EVENT, "points": -80})
            report = client.get("/accountability/en-mall",
                                params={"date": "2024-01-31"}).json()
            assert report["leader_personnel_id"] == "pe-adeyemi"
            assert [r["item_id"] for r in report["rows"]] == ["it-0001"]
            assert report["rows"][0]["station_id"] == "st-mall-lobby"

    def test_safety_map(self, seeded_dir):
        regions_path = seeded_dir / "regions.json"
        assert regions_path.exists()
        with running_app(seeded_dir, regions_path=regions_path) as client:
            post(client, "/events", {**EVENT, "points": -80})
            self.close_days(client, ["2024-01-05"])
            payload = client.get("/safety-map", params={"date": "2024-01-05"}).json()
            by_region = {r["region_id"]: r for r in payload["regions"]}
            assert set(by_region) == {r["region_id"] for r in DEMO_REGIONS}
            assert by_region["R-vacant"]["band"] == "gray"
            assert by_region["R-vacant"]["score"] is None
            assert by_region["R-east"]["band"] == "green"
            north = by_region["R-north"]
            stations = client.get("/snapshots/2024-01-05").json()["station_scores"]
            expected = (stations["st-mall-lobby"] + stations["st-mall-atrium"]) / 2
            assert north["score"] == pytest.approx(expected, abs=1e-9)
            assert north["band"] in {"green", "yellow", "red"}

    def test_duties_endpoint(self, seeded_dir):
        with running_app(seeded_dir) as client:
            item = next(it["id"] for it in client.get("/graph").json()["items"]
                        if it["periodic_rule"])
            post(client, "/duties/generate",
                 {"item_id": item, "anchor": "2024-01-01", "horizon_days": 14})
            duties = client.get("/duties", params={"item_id": item}).json()["duties"]
            assert duties and all(d["status"] == "pending" for d in duties)
            filtered = client.get("/duties", params={"status": "completed"}).json()
            assert filtered["duties"] == []


class TestRestart:
    def test_state_survives_restart(self, seeded_dir):
        with running_app(seeded_dir) as client:
            post(client, "/events", EVENT)
            post(client, "/admin/close-day", {"date": "2024-01-05"})
            before_snapshot = client.get("/snapshots/2024-01-05").content
            before_graph = client.get("/graph").content
        with running_app(seeded_dir) as client:
            assert client.get("/snapshots/2024-01-05").content == before_snapshot
            assert client.get("/graph").content == before_graph
            assert post(client, "/events", EVENT)["deduplicated"] is True


class TestConfig:
    def test_file_env_cli_precedence(self, tmp_path):
        config_file = tmp_path / "config.json"
        config_file.write_text(json.dumps({
            "data_dir": str(tmp_path / "from-file"),
            "listen_addr": "0.0.0.0:1111",
            "band_policy": {"green_min": 90, "yellow_min": 60,
                            "reminder_threshold": 65},
        }))
        env = {"IOR_LISTEN_ADDR": "0.0.0.0:2222"}
        config = load_config(config_file, env=env, data_dir=tmp_path / "from-cli")
        assert config.listen_addr == "0.0.0.0:2222"      # env beats file
        assert config.data_dir == tmp_path / "from-cli"  # cli beats env
        assert config.band_policy == BandPolicy(green_min=90, yellow_min=60,
                                                reminder_threshold=65)

    def test_invalid_config_rejected(self, tmp_path):
        bad = tmp_path / "config.json"
        bad.write_text(json.dumps({"band_policy": {"green_min": 10, "yellow_min": 90}}))
        with pytest.raises(ConfigInvalid):
            load_config(bad, env={})
        missing = tmp_path / "nope.json"
        with pytest.raises(ConfigInvalid):
            load_config(missing, env={})
        unknown = tmp_path / "unknown.json"
        unknown.write_text(json.dumps({"listen_port": 80}))
        with pytest.raises(ConfigInvalid):
            load_config(unknown, env={})
