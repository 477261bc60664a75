"""Administrative CLI: seed, simulate, close-day, verify, report, serve.

Commands operate directly on a data directory (the same one the service
uses); output is a terminal table by default or JSON with --json.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import load_config
from .demo import seed_demo, write_templates_file
from .errors import ServiceError
from .model import load_templates_file
from .oracle import verify_data_dir
from .simulate import ScenarioSpec, run_scenario
from .storage import Store
from .timeutil import parse_day


def _fail(exc: ServiceError) -> None:
    payload = exc.to_payload()
    click.echo(f"error [{payload['code']}]: {payload['message']}", err=True)
    if payload.get("details"):
        click.echo(f"  details: {json.dumps(payload['details'], sort_keys=True)}", err=True)
    sys.exit(1)


def _emit(data: dict, as_json: bool, table_lines: list[str]) -> None:
    if as_json:
        click.echo(json.dumps(data, indent=2, sort_keys=True))
    else:
        for line in table_lines:
            click.echo(line)


def _score_table(title: str, scores: dict[str, float]) -> list[str]:
    width = max([len(k) for k in scores] + [len(title)]) if scores else len(title)
    lines = [f"{title:<{width}}  score", "-" * (width + 7)]
    for subject in sorted(scores):
        lines.append(f"{subject:<{width}}  {scores[subject]:8.3f}")
    return lines


@click.group()
def main() -> None:
    """Responsibility-network administration."""


@main.command()
@click.option("--data-dir", type=click.Path(path_type=Path), default=Path("./data"),
              show_default=True)
@click.option("--templates", "templates_path", type=click.Path(path_type=Path),
              default=None, help="Templates JSON file (defaults to the built-in set).")
@click.option("--export-templates", type=click.Path(path_type=Path), default=None,
              help="Write the built-in templates to a file and exit.")
@click.option("--json", "as_json", is_flag=True, default=False)
def seed(data_dir: Path, templates_path: Path | None, export_templates: Path | None,
         as_json: bool) -> None:
    """Install the demo graph (idempotent)."""
    if export_templates is not None:
        path = write_templates_file(export_templates)
        click.echo(f"templates written to {path}")
        return
    try:
        with Store(data_dir) as store:
            templates = None
            if templates_path is not None:
                templates = [t.to_json() for t in
                             load_templates_file(templates_path, store.graph.categories)]
            result = seed_demo(store, templates)
    except ServiceError as exc:
        _fail(exc)
    summary = result["summary"]
    status = "already seeded" if result["already_seeded"] else "seeded"
    _emit(result, as_json, [
        f"{status}: {summary['companies']} company, {summary['enterprises']} enterprises, "
        f"{summary['stations']} stations, {summary['items']} items",
    ])


@main.command()
@click.option("--data-dir", type=click.Path(path_type=Path), default=Path("./data"),
              show_default=True)
@click.option("--seed", "rng_seed", type=int, default=42, show_default=True)
@click.option("--days", type=int, default=30, show_default=True)
@click.option("--enterprises", type=int, default=2, show_default=True)
@click.option("--stations-per-enterprise", type=int, default=2, show_default=True)
@click.option("--items-per-list", type=int, default=3, show_default=True)
@click.option("--event-rate", type=float, default=3.0, show_default=True,
              help="Expected events per station per day.")
@click.option("--breach-rate", type=float, default=0.6, show_default=True,
              help="Expected breaching readings per sensor per day.")
@click.option("--start", type=str, default="2024-01-01", show_default=True)
@click.option("--json", "as_json", is_flag=True, default=False)
def simulate(data_dir: Path, rng_seed: int, days: int, enterprises: int,
             stations_per_enterprise: int, items_per_list: int, event_rate: float,
             breach_rate: float, start: str, as_json: bool) -> None:
    """Run a deterministic synthetic scenario, closing each simulated day.

    Uses the existing graph if the data dir is already seeded; otherwise
    builds a uniform synthetic graph from the count options.
    """
    spec = ScenarioSpec(seed=rng_seed, days=days, enterprises=enterprises,
                        stations_per_enterprise=stations_per_enterprise,
                        items_per_list=items_per_list, event_rate=event_rate,
                        breach_rate=breach_rate)
    try:
        with Store(data_dir) as store:
            report = run_scenario(store, spec, start=parse_day(start))
    except ServiceError as exc:
        _fail(exc)
    lines = [
        f"scenario seed={spec.seed} days={spec.days} finished "
        f"({report['events_ingested']} events, {report['readings_ingested']} readings, "
        f"{report['telemetry_events']} breach deductions, "
        f"{report['overdue_events']} overdue deductions)",
        "",
    ]
    lines += _score_table("enterprise", report["scores"]["enterprises"])
    lines.append("")
    lines += _score_table("station", report["scores"]["stations"])
    _emit(report, as_json, lines)


@main.command("close-day")
@click.option("--data-dir", type=click.Path(path_type=Path), default=Path("./data"),
              show_default=True)
@click.option("--date", "day", type=str, required=True, help="Day to close (YYYY-MM-DD).")
@click.option("--json", "as_json", is_flag=True, default=False)
def close_day(data_dir: Path, day: str, as_json: bool) -> None:
    """Sweep overdue duties, accrue per-day breaches and freeze the snapshot."""
    try:
        with Store(data_dir) as store:
            snap = store.close_day(parse_day(day))
    except ServiceError as exc:
        _fail(exc)
    payload = {"date": snap.date.isoformat(), "closed": True,
               "reasons": len(snap.reasons)}
    _emit(payload, as_json,
          [f"closed {snap.date.isoformat()} with {len(snap.reasons)} reason entries"])


@main.command()
@click.option("--ledger", type=click.Path(path_type=Path), required=True,
              help="Path to events.jsonl (its directory is the data dir).")
@click.option("--json", "as_json", is_flag=True, default=False)
def verify(ledger: Path, as_json: bool) -> None:
    """Recompute every snapshot from raw events with the brute-force oracle."""
    data_dir = ledger.parent
    try:
        report = verify_data_dir(data_dir)
    except ServiceError as exc:
        _fail(exc)
    payload = report.to_json()
    if report.ok:
        _emit(payload, as_json,
              [f"pass: {report.days_checked} snapshots match "
               f"{report.events_checked} raw events"])
    else:
        divergence = report.divergence
        _emit(payload, as_json, [
            "FAIL: stored snapshot diverges from recomputation",
            f"  date={divergence.day} level={divergence.level} "
            f"subject={divergence.subject_id}",
            f"  stored={divergence.stored} recomputed={divergence.recomputed}",
        ])
        sys.exit(2)


@main.command()
@click.option("--data-dir", type=click.Path(path_type=Path), default=Path("./data"),
              show_default=True)
@click.option("--level", type=click.Choice(["item", "list", "station", "enterprise"]),
              required=True)
@click.option("--id", "subject_id", type=str, required=True)
@click.option("--from", "frm", type=str, required=True)
@click.option("--to", type=str, required=True)
@click.option("--json", "as_json", is_flag=True, default=False)
def report(data_dir: Path, level: str, subject_id: str, frm: str, to: str,
           as_json: bool) -> None:
    """Daily score series for one subject, read from closed snapshots."""
    try:
        with Store(data_dir) as store:
            points = store.engine.score_series(subject_id, parse_day(frm), parse_day(to))
    except ServiceError as exc:
        _fail(exc)
    payload = {
        "level": level,
        "subject_id": subject_id,
        "points": [{"date": d.isoformat(), "score": s} for d, s in points],
    }
    lines = [f"{level} {subject_id}", "date        score", "-" * 18]
    lines += [f"{d.isoformat()}  {s:8.3f}" for d, s in points]
    _emit(payload, as_json, lines)


@main.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--data-dir", type=click.Path(path_type=Path), default=None)
@click.option("--listen", "listen_addr", type=str, default=None,
              help="host:port (default 127.0.0.1:8321).")
@click.option("--templates", "templates_path", type=click.Path(path_type=Path), default=None)
@click.option("--rules", "rules_path", type=click.Path(path_type=Path), default=None)
@click.option("--regions", "regions_path", type=click.Path(path_type=Path), default=None)
def serve(config_path: Path | None, data_dir: Path | None, listen_addr: str | None,
          templates_path: Path | None, rules_path: Path | None,
          regions_path: Path | None) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    try:
        config = load_config(
            config_path,
            data_dir=data_dir,
            listen_addr=listen_addr,
            templates_path=templates_path,
            rules_path=rules_path,
            regions_path=regions_path,
        )
        if config.regions_path is None:
            default_regions = config.data_dir / "regions.json"
            if default_regions.exists():
                config.regions_path = default_regions
        app = create_app(config)
    except ServiceError as exc:
        _fail(exc)
    host, _, port = config.listen_addr.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))


@main.command("validate-graph")
@click.option("--data-dir", type=click.Path(path_type=Path), default=Path("./data"),
              show_default=True)
@click.option("--json", "as_json", is_flag=True, default=False)
def validate_graph(data_dir: Path, as_json: bool) -> None:
    """List every hierarchy invariant violation (empty output means healthy)."""
    try:
        with Store(data_dir) as store:
            violations = [v.to_json() for v in store.graph.validate()]
    except ServiceError as exc:
        _fail(exc)
    if as_json:
        click.echo(json.dumps({"violations": violations}, indent=2, sort_keys=True))
    elif not violations:
        click.echo("graph valid: no violations")
    else:
        for v in violations:
            click.echo(f"{v['entity_id']}: {v['invariant']} - {v['message']}")
        sys.exit(2)


if __name__ == "__main__":
    main()
