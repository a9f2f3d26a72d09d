"""SVG rendering of worlds and agent trajectories.

Agents use a fixed 8-color palette (cycling past 8); failed agents (collision
or timeout) get a dashed red frame around their trajectory.
"""

from __future__ import annotations

import math

from .errors import ContractError

PALETTE = ["red", "green", "blue", "magenta", "cyan", "orange", "purple", "limegreen"]

_SCALE = 60.0    # px per meter
_MARGIN = 40.0


def agent_color(i: int) -> str:
    return PALETTE[i % len(PALETTE)]


def render_svg(world_dict, trajectory=None, failures=None) -> str:
    """Build an SVG document string.

    world_dict: WorldState.to_dict() payload (scenario + obstacles + agents).
    trajectory: iterable of {step, agent, x, y, ...} records (may be empty).
    failures: agent indices to frame as failures; if None they are inferred
    from `collided` / `timed_out` events in the trajectory records.
    """
    scenario = world_dict.get("scenario")
    if scenario is None or "obstacles" not in world_dict or "agents" not in world_dict:
        raise ContractError("world dict missing scenario/obstacles/agents")
    w_m, h_m = scenario["arena"]
    xmin, ymax = -w_m / 2.0, h_m / 2.0
    width = w_m * _SCALE + 2 * _MARGIN
    height = h_m * _SCALE + 2 * _MARGIN

    def px(x):
        return _MARGIN + (x - xmin) * _SCALE

    def py(y):
        return _MARGIN + (ymax - y) * _SCALE

    trajectory = list(trajectory or [])
    paths: dict[int, list] = {}
    for rec in trajectory:
        paths.setdefault(int(rec["agent"]), []).append(rec)
    if failures is None:
        failures = {int(r["agent"]) for r in trajectory
                    if r.get("event") in ("collided", "timed_out")}

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<rect x="{px(xmin):.1f}" y="{py(ymax):.1f}" width="{w_m * _SCALE:.1f}" '
        f'height="{h_m * _SCALE:.1f}" fill="none" stroke="black" stroke-width="2"/>',
    ]

    for ob in world_dict["obstacles"]:
        kind = ob["kind"]
        x, y, theta = ob["x"], ob["y"], ob.get("theta", 0.0)
        if kind == "circle":
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" '
                       f'r="{ob.get("r", 0.5) * _SCALE:.1f}" fill="#b0b6bd"/>')
        elif kind == "square":
            half = ob.get("half", 0.5)
            side = 2 * half * _SCALE
            deg = -math.degrees(theta)  # svg y axis points down
            out.append(f'<rect x="{px(x) - side / 2:.1f}" y="{py(y) - side / 2:.1f}" '
                       f'width="{side:.1f}" height="{side:.1f}" fill="#b0b6bd" '
                       f'transform="rotate({deg:.2f} {px(x):.1f} {py(y):.1f})"/>')
        elif kind == "stadium":
            half_len = ob.get("half_len", 1.0)
            r = ob.get("r", 0.5)
            ax, ay = x - half_len * math.cos(theta), y - half_len * math.sin(theta)
            bx, by = x + half_len * math.cos(theta), y + half_len * math.sin(theta)
            out.append(f'<line x1="{px(ax):.1f}" y1="{py(ay):.1f}" x2="{px(bx):.1f}" '
                       f'y2="{py(by):.1f}" stroke="#b0b6bd" '
                       f'stroke-width="{2 * r * _SCALE:.1f}" stroke-linecap="round"/>')
        else:
            raise ContractError(f"unknown obstacle kind {kind!r}")

    for i, agent in enumerate(world_dict["agents"]):
        color = agent_color(i)
        gx, gy = agent["goal"]
        s = 0.12 * _SCALE
        out.append(f'<rect x="{px(gx) - s:.1f}" y="{py(gy) - s:.1f}" width="{2 * s:.1f}" '
                   f'height="{2 * s:.1f}" fill="none" stroke="{color}" stroke-width="2"/>')
        sx, sy = agent["start"][0], agent["start"][1]
        out.append(f'<circle cx="{px(sx):.1f}" cy="{py(sy):.1f}" '
                   f'r="{0.105 * _SCALE:.1f}" fill="{color}" fill-opacity="0.5"/>')

    for i in sorted(paths):
        recs = sorted(paths[i], key=lambda r: r["step"])
        color = agent_color(i)
        pts = " ".join(f"{px(r['x']):.1f},{py(r['y']):.1f}" for r in recs)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="2" stroke-opacity="0.85"/>')
        last = recs[-1]
        out.append(f'<circle cx="{px(last["x"]):.1f}" cy="{py(last["y"]):.1f}" r="4" '
                   f'fill="{color}"/>')
        if i in failures:
            xs = [r["x"] for r in recs]
            ys = [r["y"] for r in recs]
            pad = 0.25
            out.append(f'<rect x="{px(min(xs) - pad):.1f}" y="{py(max(ys) + pad):.1f}" '
                       f'width="{(max(xs) - min(xs) + 2 * pad) * _SCALE:.1f}" '
                       f'height="{(max(ys) - min(ys) + 2 * pad) * _SCALE:.1f}" '
                       f'fill="none" stroke="red" stroke-width="2" '
                       f'stroke-dasharray="6 4"/>')

    out.append("</svg>")
    return "\n".join(out)
