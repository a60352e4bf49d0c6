"""Static SVG rendering of a planned team trajectory."""

from __future__ import annotations

from xml.sax.saxutils import escape, quoteattr

from .environments import Scenario
from .planner import PlanResult

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")
SCALE = 60
MARGIN = 40
LEGEND_W = 260


def _agent_name(i: int) -> str:
    return "human" if i == 0 else f"robot {i}"


def render_svg(scenario: Scenario, result: PlanResult) -> str:
    (x0, x1), (y0, y1) = scenario.bounds
    grid = not scenario.kind.continuous
    pad = 0.5 if grid else 0.0
    w = (x1 - x0 + 2 * pad) * SCALE
    h = (y1 - y0 + 2 * pad) * SCALE

    def px(p):
        return MARGIN + (p[0] - x0 + pad) * SCALE, MARGIN + (y1 - p[1] + pad) * SCALE

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w + 2 * MARGIN + LEGEND_W:.0f}" '
        f'height="{h + 2 * MARGIN:.0f}" font-family="sans-serif" font-size="13">',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{w:.0f}" height="{h:.0f}" fill="#fafafa" stroke="#444"/>',
    ]
    if grid:
        for c in range(x0, x1 + 2):
            x = MARGIN + (c - x0) * SCALE
            out.append(f'<line x1="{x}" y1="{MARGIN}" x2="{x}" y2="{MARGIN + h:.0f}" stroke="#e3e3e3"/>')
        for r in range(y0, y1 + 2):
            y = MARGIN + (r - y0) * SCALE
            out.append(f'<line x1="{MARGIN}" y1="{y}" x2="{MARGIN + w:.0f}" y2="{y}" stroke="#e3e3e3"/>')
        for cell in scenario.obstacles:
            cx, cy = px(cell)
            out.append(f'<rect x="{cx - SCALE / 2:.1f}" y="{cy - SCALE / 2:.1f}" width="{SCALE}" '
                       f'height="{SCALE}" fill="#8c8c8c"/>')

    owners = {t: i for i, s in enumerate(result.allocation.assignments) for t in s}
    for t, (target, label) in enumerate(zip(scenario.targets, scenario.labels)):
        cx, cy = px(target)
        colour = PALETTE[owners.get(t, 0) % len(PALETTE)]
        out.append(f'<rect x="{cx - 9:.1f}" y="{cy - 9:.1f}" width="18" height="18" fill="white" '
                   f'stroke={quoteattr(colour)} stroke-width="3"/>')
        out.append(f'<text x="{cx + 12:.1f}" y="{cy - 10:.1f}">{escape(label)}</text>')

    for i in range(scenario.n_agents):
        track = result.trajectory.agent_positions(i)
        colour = PALETTE[i % len(PALETTE)]
        pts = " ".join("%.1f,%.1f" % px(p) for p in track)
        dash = ' stroke-dasharray="6 4"' if i == 0 else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke={quoteattr(colour)} stroke-width="3"'
                   f' stroke-linejoin="round"{dash}/>')
        sx, sy = px(track[0])
        out.append(f'<circle cx="{sx:.1f}" cy="{sy:.1f}" r="8" fill={quoteattr(colour)}/>')

    lx = MARGIN * 2 + w
    obj = result.objective
    lines = [f"objective: {obj.name}"]
    if obj.kind.is_fair:
        lines.append(f"lambda: {obj.lam:g}")
    lines.append(f"value: {result.objective_value:.4f}")
    lines.append(f"steps: {result.completion_steps}")
    out.append(f'<text x="{lx}" y="{MARGIN + 4}" font-weight="bold">{escape(scenario.id)}</text>')
    y = MARGIN + 26
    for text in lines:
        out.append(f'<text x="{lx}" y="{y}">{escape(text)}</text>')
        y += 20
    y += 10
    for i, subtasks in enumerate(result.allocation.assignments):
        colour = PALETTE[i % len(PALETTE)]
        names = ", ".join(scenario.labels[t] for t in sorted(subtasks)) or "(none)"
        dash = ' stroke-dasharray="6 4"' if i == 0 else ""
        out.append(f'<line x1="{lx}" y1="{y - 4}" x2="{lx + 24}" y2="{y - 4}" stroke={quoteattr(colour)} '
                   f'stroke-width="3"{dash}/>')
        out.append(f'<text x="{lx + 32}" y="{y}">{escape(_agent_name(i))}: {escape(names)}</text>')
        y += 22
    out.append("</svg>")
    return "\n".join(out) + "\n"
