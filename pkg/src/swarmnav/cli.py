"""Command line entry point: a thin client over the HTTP service.

With no --server the commands run against an in-process app instance through
an ASGI transport (same request/response path, no socket); pointing --server
at a running `swarmnav serve` instance executes them remotely. Flags can be
supplied through SWARMNAV_* environment variables (e.g. SWARMNAV_SERVER).

Exit codes: 0 success, 1 usage/config error, 2 runtime error.
"""

from __future__ import annotations

import asyncio
import json
import sys

import click
import httpx

from .errors import ConfigError


class _InProcessTransport(httpx.BaseTransport):
    """Synchronous bridge to the ASGI app: one event loop per request."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def dispatch():
            response = await self._asgi.handle_async_request(request)
            await response.aread()
            return response

        response = asyncio.run(dispatch())
        return httpx.Response(status_code=response.status_code,
                              headers=response.headers,
                              content=response.content,
                              request=request)


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from .service.app import create_app
    return httpx.Client(transport=_InProcessTransport(create_app()),
                        base_url="http://swarmnav.local", timeout=None)


class RuntimeFailure(click.ClickException):
    exit_code = 2


def _post(ctx, path, payload, expect_json=True):
    with _client(ctx.obj.get("server")) as client:
        try:
            resp = client.post(path, json=payload)
        except httpx.HTTPError as e:
            raise RuntimeFailure(f"cannot reach service: {e}")
    if resp.status_code == 422:
        raise click.UsageError(_detail(resp))
    if resp.status_code >= 400:
        raise RuntimeFailure(_detail(resp))
    return resp.json() if expect_json else resp


def _detail(resp):
    try:
        return resp.json().get("detail", resp.text)
    except json.JSONDecodeError:
        return resp.text


@click.group(context_settings={"auto_envvar_prefix": "SWARMNAV"})
@click.option("--server", default=None, envvar="SWARMNAV_SERVER",
              help="Base URL of a running service; default runs in-process.")
@click.pass_context
def cli(ctx, server):
    """Map-free multi-agent LiDAR navigation: train, evaluate, plot."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn
    uvicorn.run("swarmnav.service.app:app", host=host, port=port)


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="YAML run configuration.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override train/eval seed.")
@click.option("--variant", type=click.Choice(["lstp", "gru", "linear"]), default=None)
@click.option("--reward", "reward_mode", type=click.Choice(["hs", "conventional"]),
              default=None)
@click.option("--background", is_flag=True, help="Submit as a background job.")
@click.pass_context
def train(ctx, config_path, out_dir, seed, variant, reward_mode, background):
    """Train a policy; writes checkpoints, curves, and a manifest."""
    payload = {"config_path": config_path, "out_dir": out_dir, "seed": seed,
               "variant": variant, "reward_mode": reward_mode,
               "background": background}
    data = _post(ctx, "/api/train", payload)
    if background:
        click.echo(f"job {data['job_id']} {data['state']} (poll /api/jobs/{data['job_id']})")
        return
    click.echo(f"run dir: {data['out_dir']}")
    click.echo(f"checkpoints: {len(data['checkpoints'])} "
               f"(final: {data['checkpoints'][-1]})")
    click.echo(f"curves: {data['curves_path']}")
    sr = data.get("final_sr")
    click.echo(f"mean reward first/best: {data['first_mean_reward']:.3f} / "
               f"{data['best_mean_reward']:.3f}"
               + (f", rolling SR {sr:.3f}" if sr is not None else ""))


@cli.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@click.option("--n-trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--deterministic/--stochastic", "deterministic", default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--save-trajectories", type=int, default=None,
              help="Write world/trajectory files for the first N trials.")
@click.option("--stage", "stage_index", type=int, default=None,
              help="Evaluate on a specific curriculum stage (default: last).")
@click.pass_context
def eval_cmd(ctx, checkpoint, config_path, out_dir, n_trials, seed, deterministic,
             workers, save_trajectories, stage_index):
    """Evaluate a checkpoint: SR / CR / TR / AS over seeded trials."""
    payload = {"checkpoint": checkpoint, "config_path": config_path,
               "out_dir": out_dir, "n_trials": n_trials, "seed": seed,
               "deterministic": deterministic, "workers": workers,
               "save_trajectories": save_trajectories, "stage_index": stage_index}
    data = _post(ctx, "/api/eval", payload)
    m = data["metrics"]
    as_txt = f"{m['avg_steps']:.2f}" if m["avg_steps"] is not None else "-"
    click.echo(f"SR {m['sr']:.4f}  CR {m['cr']:.4f}  TR {m['tr']:.4f}  AS {as_txt}  "
               f"({m['n_trials']} trials x {m['n_agents']} agents)")


@cli.command()
@click.option("--checkpoint", "checkpoints", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Repeat for each policy to compare.")
@click.option("--label", "labels", multiple=True, help="Optional labels, same order.")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@click.option("--n-trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--deterministic/--stochastic", "deterministic", default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--stage", "stage_index", type=int, default=None)
@click.pass_context
def compare(ctx, checkpoints, labels, config_path, out_dir, n_trials, seed,
            deterministic, workers, stage_index):
    """Paired evaluation of several checkpoints on identical worlds."""
    payload = {"checkpoints": list(checkpoints), "labels": list(labels) or None,
               "config_path": config_path, "out_dir": out_dir,
               "n_trials": n_trials, "seed": seed, "deterministic": deterministic,
               "workers": workers, "stage_index": stage_index}
    data = _post(ctx, "/api/compare", payload)
    click.echo(data["table"])
    if not data["world_hashes_equal"]:
        raise RuntimeFailure("paired evaluation saw differing worlds across policies")


@cli.command()
@click.option("--trajectory", "trajectory_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSONL trajectory log.")
@click.option("--world", "world_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="World JSON written alongside the trajectory.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def plot(ctx, trajectory_path, world_path, out_path):
    """Render a trajectory log to an SVG."""
    payload = {"trajectory_path": trajectory_path, "world_path": world_path,
               "out_path": None}
    resp = _post(ctx, "/api/plot", payload, expect_json=False)
    with open(out_path, "w") as f:
        f.write(resp.text)
    click.echo(f"wrote {out_path}")


@cli.command("inspect-replay")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-steps", type=int, default=2000, show_default=True)
@click.option("--post-steps", type=int, default=10, show_default=True)
@click.pass_context
def inspect_replay(ctx, checkpoint, config_path, seed, max_steps, post_steps):
    """Run training-mode steps until a collision and dump the replay ring."""
    payload = {"checkpoint": checkpoint, "config_path": config_path, "seed": seed,
               "max_steps": max_steps, "post_steps": post_steps}
    data = _post(ctx, "/api/replay/inspect", payload)
    click.echo(json.dumps(data, indent=1))


def main(argv=None):
    try:
        cli(args=argv, standalone_mode=False)
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        sys.exit(1)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(1)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.Abort:
        sys.exit(1)
    except click.ClickException as e:
        click.echo(f"error: {e.format_message()}", err=True)
        sys.exit(e.exit_code)
    sys.exit(0)


if __name__ == "__main__":
    main()
