"""HTTP facade: JSON in, JSON out, every module error mapped to an ApiError.

Endpoint list and field names are frozen in docs/api.md. Mutating endpoints
are idempotent under retry via the client-supplied id (event_id, reading_id,
rule_id); GETs are pure functions of persisted state plus query parameters.
"""

from __future__ import annotations

import json
import logging
from contextlib import asynccontextmanager
from datetime import timedelta

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse

from .config import ServiceConfig, load_regions
from .errors import InvalidSpec, MissingSnapshot, ServiceError, UnknownEntity
from .model import load_templates_file
from .scoring import BandPolicy, classify_band
from .scheduler import DutyStatus
from .storage import Store, read_jsonl
from .timeutil import parse_day

logger = logging.getLogger(__name__)

MAX_SERIES_POINTS = 366

LEVELS = ("item", "list", "station", "enterprise")


def create_app(config: ServiceConfig) -> FastAPI:
    store = Store(config.data_dir, band_policy=config.band_policy)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        store.close()

    app = FastAPI(title="respnet", docs_url=None, redoc_url=None, lifespan=lifespan)
    app.state.store = store
    app.state.config = config
    app.state.regions = load_regions(config.regions_path) if config.regions_path else []
    if config.templates_path:
        for template in load_templates_file(config.templates_path, store.graph.categories):
            store.register_template(template)
    if config.rules_path:
        for _, record in read_jsonl(config.rules_path):
            store.register_rule(record)

    @app.exception_handler(ServiceError)
    async def service_error_handler(_request: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(status_code=exc.http_status, content=exc.to_payload())

    @app.exception_handler(json.JSONDecodeError)
    async def bad_json_handler(_request: Request, exc: json.JSONDecodeError) -> JSONResponse:
        return JSONResponse(status_code=400,
                            content={"code": "invalid_json", "message": exc.msg})

    def policy_from_query(green_min: float | None, yellow_min: float | None,
                          reminder_threshold: float | None) -> BandPolicy:
        base = store.band_policy
        return BandPolicy(
            green_min=base.green_min if green_min is None else green_min,
            yellow_min=base.yellow_min if yellow_min is None else yellow_min,
            reminder_threshold=(base.reminder_threshold if reminder_threshold is None
                                else reminder_threshold),
        )

    # -- graph ------------------------------------------------------------------

    @app.post("/graph/companies")
    async def post_company(request: Request) -> dict:
        body = await request.json()
        company = store.add_company(body.get("name", ""), id=body.get("id"))
        return {"id": company.id}

    @app.post("/graph/personnel")
    async def post_personnel(request: Request) -> dict:
        body = await request.json()
        person = store.add_personnel(body.get("company_id", ""), body.get("name", ""),
                                     body.get("role", ""), id=body.get("id"))
        return {"id": person.id}

    @app.post("/graph/enterprises")
    async def post_enterprise(request: Request) -> dict:
        body = await request.json()
        enterprise = store.add_enterprise(body.get("company_id", ""), body.get("name", ""),
                                          body.get("category", ""), id=body.get("id"))
        return {"id": enterprise.id}

    @app.post("/graph/stations")
    async def post_station(request: Request) -> dict:
        body = await request.json()
        station = store.add_station(body.get("enterprise_id", ""), body.get("name", ""),
                                    body.get("personnel_id", ""), id=body.get("id"))
        return {"id": station.id}

    @app.post("/graph/lists")
    async def post_list(request: Request) -> dict:
        body = await request.json()
        rlist = store.add_list(body.get("station_id", ""), body.get("weight", 0),
                               id=body.get("id"))
        return {"id": rlist.id}

    @app.post("/graph/items")
    async def post_item(request: Request) -> dict:
        body = await request.json()
        item = store.add_item(body.get("list_id", ""), body.get("description", ""),
                              body.get("legal_basis", ""), body.get("weight", 0),
                              body.get("periodic_rule"), id=body.get("id"))
        return {"id": item.id}

    @app.post("/graph/templates")
    async def post_template(request: Request) -> dict:
        body = await request.json()
        template = store.register_template(body)
        return {"template_id": template.template_id}

    @app.post("/graph/derive")
    async def post_derive(request: Request) -> dict:
        body = await request.json()
        list_ids = store.derive_station_lists(body.get("station_id", ""),
                                              body.get("template_id", ""))
        return {"list_ids": list_ids}

    @app.get("/graph")
    def get_graph() -> dict:
        return store.graph.dump()

    @app.get("/graph/validate")
    def get_validate() -> dict:
        return {"violations": [v.to_json() for v in store.graph.validate()]}

    # -- ingestion ------------------------------------------------------------------

    @app.post("/events")
    async def post_event(request: Request) -> dict:
        body = await request.json()
        result = store.ingest_event(body)
        return {"event_id": body.get("event_id"), "deduplicated": not result.applied}

    @app.post("/readings")
    async def post_reading(request: Request) -> dict:
        body = await request.json()
        result = store.ingest_reading(body)
        return {
            "reading_id": body.get("reading_id"),
            "deduplicated": not result.applied,
            "events": result.event_ids,
        }

    @app.post("/rules")
    async def post_rule(request: Request) -> dict:
        body = await request.json()
        return {"rule_id": store.register_rule(body)}

    # -- duties ------------------------------------------------------------------

    @app.post("/duties/generate")
    async def post_generate(request: Request) -> dict:
        body = await request.json()
        instances = store.generate_duties(body.get("item_id", ""),
                                          parse_day(body.get("anchor", "")),
                                          body.get("horizon_days", 0))
        return {"instances": [inst.to_json() for inst in instances]}

    @app.get("/duties")
    def get_duties(item_id: str | None = None, personnel_id: str | None = None,
                   status: str | None = None) -> dict:
        duty_status = None
        if status is not None:
            try:
                duty_status = DutyStatus(status)
            except ValueError:
                raise InvalidSpec(f"unknown duty status {status!r}", field="status")
        instances = store.scheduler.instances(item_id=item_id, status=duty_status)
        if personnel_id is not None:
            item_ids = _items_of_personnel(store, personnel_id)
            instances = [inst for inst in instances if inst.item_id in item_ids]
        return {"duties": [inst.to_json() for inst in instances]}

    # -- admin ------------------------------------------------------------------

    @app.post("/admin/close-day")
    async def post_close_day(request: Request) -> dict:
        body = await request.json()
        day = parse_day(body.get("date", ""))
        snap = store.close_day(day)
        return {"date": day.isoformat(), "closed": True,
                "reason_count": len(snap.reasons)}

    # -- queries ------------------------------------------------------------------

    @app.get("/scores/{level}/{subject_id}")
    def get_scores(level: str, subject_id: str,
                   frm: str | None = Query(default=None, alias="from"),
                   to: str | None = None) -> dict:
        if level not in LEVELS:
            raise InvalidSpec(f"level must be one of {LEVELS}", field="level")
        closed = store.engine.closed_days()
        if not closed and (frm is None or to is None):
            raise MissingSnapshot("no closed days yet")
        frm_day = parse_day(frm) if frm else closed[0]
        to_day = parse_day(to) if to else closed[-1]
        if to_day >= frm_day + timedelta(days=MAX_SERIES_POINTS):
            to_day = frm_day + timedelta(days=MAX_SERIES_POINTS - 1)
        _check_level(store, level, subject_id)
        points = store.engine.score_series(subject_id, frm_day, to_day)
        return {
            "level": level,
            "subject_id": subject_id,
            "points": [{"date": d.isoformat(), "score": s} for d, s in points],
        }

    @app.get("/snapshots/{day}")
    def get_snapshot(day: str) -> dict:
        return store.engine.snapshot(parse_day(day)).to_json()

    @app.get("/reminders")
    def get_reminders(date: str, green_min: float | None = None,
                      yellow_min: float | None = None,
                      reminder_threshold: float | None = None) -> dict:
        policy = policy_from_query(green_min, yellow_min, reminder_threshold)
        day = parse_day(date)
        reminders = store.engine.low_score_reminders(day, policy)
        return {"date": day.isoformat(),
                "reminders": [n.to_json() for n in reminders]}

    @app.get("/accountability/{enterprise_id}")
    def get_accountability(enterprise_id: str, date: str,
                           green_min: float | None = None,
                           yellow_min: float | None = None,
                           reminder_threshold: float | None = None) -> dict:
        policy = policy_from_query(green_min, yellow_min, reminder_threshold)
        day = parse_day(date)
        rows = store.engine.accountability_report(enterprise_id, day, policy)
        return {
            "enterprise_id": enterprise_id,
            "date": day.isoformat(),
            "leader_personnel_id": store.engine.enterprise_leader(enterprise_id),
            "rows": [r.to_json() for r in rows],
        }

    @app.get("/safety-map")
    def get_safety_map(date: str, green_min: float | None = None,
                       yellow_min: float | None = None,
                       reminder_threshold: float | None = None) -> dict:
        policy = policy_from_query(green_min, yellow_min, reminder_threshold)
        day = parse_day(date)
        snap = store.engine.snapshot(day)
        regions = []
        for region in app.state.regions:
            member_scores = [snap.station_scores[sid] for sid in region["station_ids"]
                             if sid in snap.station_scores]
            if member_scores:
                score = sum(member_scores) / len(member_scores)
                band = classify_band(score, policy).value
            else:
                score, band = None, "gray"
            regions.append({
                "region_id": region["region_id"],
                "station_ids": list(region["station_ids"]),
                "score": score,
                "band": band,
            })
        return {"date": day.isoformat(), "regions": regions}

    return app


def _check_level(store: Store, level: str, subject_id: str) -> None:
    registry = {
        "item": store.graph.items,
        "list": store.graph.lists,
        "station": store.graph.stations,
        "enterprise": store.graph.enterprises,
    }[level]
    if subject_id not in registry:
        raise UnknownEntity(f"{level} {subject_id!r} does not exist")


def _items_of_personnel(store: Store, personnel_id: str) -> set[str]:
    item_ids: set[str] = set()
    for station in store.graph.stations.values():
        if station.personnel_id != personnel_id:
            continue
        for lid in station.list_ids:
            item_ids.update(store.graph.lists[lid].item_ids)
    return item_ids
