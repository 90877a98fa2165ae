"""Self-contained SVG figures, no plotting dependencies.

Fixed-precision coordinate formatting keeps the output byte-identical for
identical inputs, so figures can be hashed and diffed in tests.
"""

from __future__ import annotations

import numpy as np

_FONT = "font-family='Helvetica,Arial,sans-serif'"


def _fmt(v: float) -> str:
    return f"{v:.3f}"


class Canvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: list[str] = [
            f"<svg xmlns='http://www.w3.org/2000/svg' width='{width}' "
            f"height='{height}' viewBox='0 0 {width} {height}'>",
            f"<rect x='0' y='0' width='{width}' height='{height}' fill='white'/>",
        ]

    def line(self, x1, y1, x2, y2, color="black", width=1.0, dash=None):
        extra = f" stroke-dasharray='{dash}'" if dash else ""
        self.parts.append(
            f"<line x1='{_fmt(x1)}' y1='{_fmt(y1)}' x2='{_fmt(x2)}' y2='{_fmt(y2)}' "
            f"stroke='{color}' stroke-width='{width}'{extra}/>"
        )

    def polyline(self, xs, ys, color="black", width=1.5):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
        self.parts.append(
            f"<polyline points='{pts}' fill='none' stroke='{color}' "
            f"stroke-width='{width}'/>"
        )

    def polygon(self, xs, ys, color, opacity=0.25):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
        self.parts.append(
            f"<polygon points='{pts}' fill='{color}' fill-opacity='{opacity}' "
            f"stroke='none'/>"
        )

    def rect(self, x, y, w, h, color, opacity=1.0):
        self.parts.append(
            f"<rect x='{_fmt(x)}' y='{_fmt(y)}' width='{_fmt(w)}' height='{_fmt(h)}' "
            f"fill='{color}' fill-opacity='{opacity}'/>"
        )

    def text(self, x, y, s, size=12, anchor="middle", color="black"):
        self.parts.append(
            f"<text x='{_fmt(x)}' y='{_fmt(y)}' font-size='{size}' {_FONT} "
            f"text-anchor='{anchor}' fill='{color}'>{s}</text>"
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


class Axes:
    """Maps data coordinates into a pixel box and draws simple ticks."""

    def __init__(self, canvas, box, xlim, ylim):
        self.canvas = canvas
        self.x0, self.y0, self.w, self.h = box
        self.xlim = xlim
        self.ylim = ylim

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (y - lo) / (hi - lo) * self.h

    def frame(self, title="", xlabel="", ylabel=""):
        c = self.canvas
        c.line(self.x0, self.y0 + self.h, self.x0 + self.w, self.y0 + self.h)
        c.line(self.x0, self.y0, self.x0, self.y0 + self.h)
        if title:
            c.text(self.x0 + self.w / 2, self.y0 - 8, title, size=13)
        if xlabel:
            c.text(self.x0 + self.w / 2, self.y0 + self.h + 30, xlabel)
        if ylabel:
            x, y = self.x0 - 42, self.y0 + self.h / 2
            self.canvas.parts.append(
                f"<text x='{_fmt(x)}' y='{_fmt(y)}' font-size='12' {_FONT} "
                f"text-anchor='middle' transform='rotate(-90 {_fmt(x)} {_fmt(y)})'>"
                f"{ylabel}</text>"
            )

    def xticks(self, values):
        for v in values:
            x = self.px(v)
            self.canvas.line(x, self.y0 + self.h, x, self.y0 + self.h + 4)
            self.canvas.text(x, self.y0 + self.h + 16, f"{v:g}", size=10)

    def yticks(self, values):
        for v in values:
            y = self.py(v)
            self.canvas.line(self.x0 - 4, y, self.x0, y)
            self.canvas.text(self.x0 - 7, y + 3, f"{v:g}", size=10, anchor="end")

    def band(self, xs, lower, upper, color):
        pxs = [self.px(x) for x in xs] + [self.px(x) for x in reversed(xs)]
        pys = [self.py(v) for v in lower] + [self.py(v) for v in reversed(upper)]
        self.canvas.polygon(pxs, pys, color)

    def curve(self, xs, ys, color, width=1.8):
        self.canvas.polyline([self.px(x) for x in xs], [self.py(y) for y in ys], color, width)


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if mult * mag >= raw:
            step = mult * mag
            break
    start = np.ceil(lo / step) * step
    ticks = list(np.arange(start, hi + step / 2, step))
    return [float(round(t, 10)) for t in ticks]


def occupancy_figure(
    occupancy: dict[str, dict[str, list[float]]],
    windows: dict[str, tuple[int, int]],
) -> str:
    """Grouped bar chart of per-zone occupancy, early vs late training windows.

    Bar heights are means across seeds, whiskers are one standard deviation.
    """
    canvas = Canvas(560, 360)
    ax = Axes(canvas, (70, 50, 440, 240), (-0.5, 2.5), (0.0, 1.0))
    colors = {"early": "#888888", "late": "#2b6cb0"}
    bar_w = 0.3
    for zi in range(3):
        for k, window in enumerate(("early", "late")):
            values = np.array(occupancy[window][f"Z{zi}"])
            mean = float(values.mean())
            std = float(values.std())
            cx = zi + (k - 0.5) * (bar_w + 0.05)
            x_px = ax.px(cx - bar_w / 2)
            y_px = ax.py(mean)
            canvas.rect(x_px, y_px, ax.px(cx + bar_w / 2) - x_px,
                        ax.py(0.0) - y_px, colors[window])
            canvas.line(ax.px(cx), ax.py(max(mean - std, 0.0)),
                        ax.px(cx), ax.py(min(mean + std, 1.0)), color="black")
    ax.frame(title="Zone occupancy, early vs late training", ylabel="fraction of steps")
    ax.yticks([0, 0.25, 0.5, 0.75, 1.0])
    for zi in range(3):
        canvas.text(ax.px(zi), ax.py(0) + 16, f"Z{zi}", size=11)
    e0, e1 = windows["early"]
    l0, l1 = windows["late"]
    canvas.rect(360, 58, 12, 12, colors["early"])
    canvas.text(378, 68, f"episodes {e0}-{e1}", anchor="start", size=11)
    canvas.rect(360, 78, 12, 12, colors["late"])
    canvas.text(378, 88, f"episodes {l0}-{l1}", anchor="start", size=11)
    return canvas.render()


def hysteresis_figure(trajectories: dict[str, dict[str, "object"]]) -> str:
    """Two panels of switch-aligned medians with IQR bands, one per signal."""
    canvas = Canvas(900, 380)
    titles = {"g_score": "global-latent projection", "entropy_z": "policy entropy (z)"}
    colors = {"A->B": "#c0392b", "B->A": "#2b6cb0"}
    for panel, signal in enumerate(("g_score", "entropy_z")):
        pair = trajectories[signal]
        period = pair["A->B"].period
        lo = min(float(np.min(pair[d].q25)) for d in pair)
        hi = max(float(np.max(pair[d].q75)) for d in pair)
        pad = 0.05 * (hi - lo or 1.0)
        ax = Axes(
            canvas,
            (70 + panel * 440, 50, 350, 250),
            (0, period - 1),
            (lo - pad, hi + pad),
        )
        taus = list(range(period))
        for direction, traj in pair.items():
            ax.band(taus, traj.q25, traj.q75, colors[direction])
            ax.curve(taus, traj.median, colors[direction])
        ax.frame(title=titles[signal], xlabel="steps since switch", ylabel="signal")
        ax.xticks(list(range(0, period, max(period // 5, 1))))
        ax.yticks(_nice_ticks(lo - pad, hi + pad))
        for k, direction in enumerate(colors):
            y = 60 + 16 * k
            x = 90 + panel * 440
            canvas.line(x, y - 4, x + 20, y - 4, color=colors[direction], width=2)
            label = direction.replace("->", "&#8594;")
            canvas.text(x + 26, y, label, anchor="start", size=11)
    return canvas.render()
