"""Command-line client for the pipeline service.

By default the CLI talks to an in-process instance of the HTTP service
(no daemon needed); ``--server http://host:port`` points it at a
running one instead, in which case all paths are interpreted on the
server's filesystem. ``bevsim serve`` starts the service.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
error.
"""

from __future__ import annotations

import base64
import json
import sys
from pathlib import Path

import click
import httpx

from . import __version__
from .config import load_config
from .errors import ConfigError

EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_STATUS_EXIT = {400: EXIT_CONFIG, 404: EXIT_DATA, 409: EXIT_DATA, 422: EXIT_CONFIG}


class ServiceClient:
    def __init__(self, server: str | None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            # sync bridge onto an in-process ASGI app; no daemon required
            from starlette.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach service: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)
        if response.status_code != 200:
            try:
                body = response.json()
                message = body.get("error") or body.get("detail") or response.text
            except ValueError:
                message = response.text
            click.echo(f"error: {message}", err=True)
            sys.exit(_STATUS_EXIT.get(response.status_code, EXIT_INTERNAL))
        return response.json()


def _load_inline_config(config_path: str | None) -> dict | None:
    if config_path is None:
        return None
    try:
        return load_config(config_path).model_dump(mode="json")
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _emit_report(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n")
        click.echo(f"report written to {out}")
    else:
        click.echo(text)


@click.group()
@click.version_option(version=__version__, prog_name="bevsim")
@click.option("--server", default=None, metavar="URL", help="Use a running service instead of in-process.")
@click.option("--config", "config_path", default=None, metavar="PATH", help="JSON run config.")
@click.pass_context
def main(ctx, server, config_path):
    """Indoor lidar simulation, BEV ground truth, and mask evaluation."""
    ctx.ensure_object(dict)
    ctx.obj["client"] = ServiceClient(server)
    ctx.obj["config"] = _load_inline_config(config_path)


@main.command()
@click.option("--count", type=int, required=True, help="Number of frames to generate.")
@click.option("--out", "out_dir", required=True, metavar="DIR", help="Dataset output directory.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.pass_context
def generate(ctx, count, out_dir, seed):
    """Generate scenes, scan them, and write clouds + labels + splits."""
    report = ctx.obj["client"].post(
        "/generate",
        {"config": ctx.obj["config"], "count": count, "out_dir": out_dir, "seed": seed},
    )
    per_frame = report["seconds_total"] / max(report["frames"], 1)
    click.echo(
        f"generated {report['frames']} frames in {report['seconds_total']:.2f}s "
        f"({per_frame * 1000:.1f} ms/frame, {report['rays_per_frame']} rays/frame) "
        f"-> {report['out_dir']}"
    )
    click.echo("splits: " + ", ".join(f"{k}={v}" for k, v in report["splits"].items()))


@main.command()
@click.argument("scene_json", type=click.Path())
@click.option("--out", "out_path", default=None, metavar="FILE", help="Write the cloud as .bin.")
@click.option("--seed", type=int, default=None, help="Noise seed override.")
@click.option("--stdout-points", is_flag=True, help="Print returned point count only (fetch inline).")
@click.pass_context
def scan(ctx, scene_json, out_path, seed, stdout_points):
    """Scan one scene JSON file into a point cloud."""
    report = ctx.obj["client"].post(
        "/scan",
        {
            "config": ctx.obj["config"],
            "scene_path": scene_json,
            "seed": seed,
            "out_path": out_path,
            "return_points": stdout_points,
        },
    )
    click.echo(f"{report['n_points']} points" + (f" -> {report['out_path']}" if report.get("out_path") else ""))
    if stdout_points and report.get("points_b64"):
        click.echo(f"payload bytes: {len(base64.b64decode(report['points_b64']))}")


@main.command()
@click.argument("dataset_dir", type=click.Path())
@click.option("--out", "out_dir", required=True, metavar="DIR", help="Mask/ground-truth output directory.")
@click.option("--split", default=None, help="Restrict to one split (default: all).")
@click.pass_context
def rasterize(ctx, dataset_dir, out_dir, split):
    """Rasterize each frame's labels into BEV instance masks."""
    report = ctx.obj["client"].post(
        "/rasterize",
        {"config": ctx.obj["config"], "dataset_dir": dataset_dir, "out_dir": out_dir, "split": split},
    )
    click.echo(
        f"rasterized {report['written']} frames onto a "
        f"{report['grid'][0]}x{report['grid'][1]} grid -> {report['out_dir']}"
    )
    if report["failures"]:
        click.echo(f"{len(report['failures'])} frames failed:", err=True)
        for failure in report["failures"]:
            click.echo(f"  {failure['frame_id']}: {failure['error']}", err=True)


@main.command()
@click.argument("dataset_dir", type=click.Path())
@click.option("--out", "out_dir", required=True, metavar="DIR", help="Augmented dataset directory.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--split", default=None, help="Restrict to one split (default: all).")
@click.pass_context
def augment(ctx, dataset_dir, out_dir, seed, split):
    """Apply the augmentation pipeline to every frame."""
    report = ctx.obj["client"].post(
        "/augment",
        {
            "config": ctx.obj["config"],
            "dataset_dir": dataset_dir,
            "out_dir": out_dir,
            "seed": seed,
            "split": split,
        },
    )
    click.echo(f"augmented {report['frames']} frames -> {report['out_dir']}")


def _format_eval_table(report: dict) -> str:
    thresholds = sorted(report["ap"].keys(), key=float)
    classes = sorted(report["gt_counts"].keys(), key=int)
    header = ["class", "gts"] + [f"AP@{t}" for t in thresholds] + ["mIoU", "PQ", "SQ", "RQ"]
    rows = [header]
    pq_per_class = report["pq"]["per_class"]
    for cls in classes:
        row = [cls, report["gt_counts"][cls]]
        for t in thresholds:
            row.append(_fmt(report["ap_per_class"][t].get(cls)))
        row.append(_fmt(report["miou_per_class"].get(cls)))
        stats = pq_per_class.get(cls)
        row += [_fmt(stats and stats["pq"]), _fmt(stats and stats["sq"]), _fmt(stats and stats["rq"])]
        rows.append([str(v) for v in row])
    overall = ["overall", str(sum(int(v) for v in report["gt_counts"].values()))]
    overall += [_fmt(report["ap"][t]) for t in thresholds]
    overall += [_fmt(report["miou"]), _fmt(report["pq"]["pq"]), _fmt(report["pq"]["sq"]), _fmt(report["pq"]["rq"])]
    rows.append(overall)
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = ["  ".join(cell.rjust(widths[c]) for c, cell in enumerate(row)) for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.4f}"


@main.command("eval")
@click.argument("pred_dir", type=click.Path())
@click.argument("gt_dir", type=click.Path())
@click.option("--out", "out_path", default=None, metavar="FILE", help="Write the JSON report here.")
@click.pass_context
def eval_cmd(ctx, pred_dir, gt_dir, out_path):
    """Evaluate per-frame predictions against rasterized ground truth."""
    report = ctx.obj["client"].post(
        "/eval", {"config": ctx.obj["config"], "pred_dir": pred_dir, "gt_dir": gt_dir}
    )
    click.echo(_format_eval_table(report))
    _emit_report(report, out_path)


@main.command()
@click.option("--rays", type=int, default=100_000, show_default=True)
@click.option("--objects", type=int, default=50, show_default=True)
@click.option("--workers", default="1,8", show_default=True, help="Comma-separated thread counts.")
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", default=None, metavar="FILE", help="Write the JSON report here.")
@click.pass_context
def bench(ctx, rays, objects, workers, repeats, seed, out_path):
    """Benchmark scan throughput across kernel thread counts."""
    try:
        worker_list = [int(w) for w in workers.split(",") if w.strip()]
    except ValueError:
        click.echo(f"error: bad --workers value {workers!r}", err=True)
        sys.exit(EXIT_CONFIG)
    report = ctx.obj["client"].post(
        "/bench",
        {
            "config": ctx.obj["config"],
            "rays": rays,
            "objects": objects,
            "workers": worker_list,
            "repeats": repeats,
            "seed": seed,
        },
    )
    for res in report["results"]:
        click.echo(
            f"workers={res['requested_workers']} (effective {res['effective_workers']}): "
            f"{res['seconds'] * 1000:.1f} ms, {res['rays_per_sec'] / 1e6:.2f} Mrays/s"
        )
    click.echo(f"scaling ratio: {report['scaling_ratio']:.2f}x on {report['host_cpus']} cpus")
    _emit_report(report, out_path)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8711, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
