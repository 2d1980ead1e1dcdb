"""Top-down trace plots (PNG) and potential-map snapshots (PGM).

Output names inside ``out_dir``:
    path.png               robot path colored by mode, agent paths, avoidance points
    potential_NNNN.pgm     quantized potential at the first decision of each episode
    compare.png            several traces on shared axes (``emit_comparison``)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MODE_COLORS = {
    "Idle": "#4d4d4d",
    "Navigating": "#1f77b4",
    "Avoiding": "#d62728",
    "Recovering": "#2ca02c",
}


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _static_cells(header) -> tuple[np.ndarray, float, tuple[float, float]]:
    m = header["scenario"]["map"]
    rows = m["grid"]
    cells = np.array([[c == "#" for c in r] for r in rows[::-1]], dtype=bool)
    return cells, m["resolution"], tuple(m["origin"])


def _draw(ax, records, label_prefix=""):
    header = records[0]
    ticks = [r for r in records if r["type"] == "tick"]
    cells, res, origin = _static_cells(header)
    h, w = cells.shape
    extent = (origin[0], origin[0] + w * res, origin[1], origin[1] + h * res)
    ax.imshow(cells, origin="lower", extent=extent, cmap="Greys", vmin=0, vmax=1.5,
              interpolation="nearest")
    agents: dict[int, list] = {}
    for r in ticks:
        for a in r["agents"]:
            agents.setdefault(a[0], []).append((a[1], a[2]))
    for aid in sorted(agents):
        p = np.array(agents[aid])
        ax.plot(p[:, 0], p[:, 1], color="#ff7f0e", lw=1.0, ls="--",
                label=f"{label_prefix}agent {aid}")
    xy = np.array([r["robot"][:2] for r in ticks])
    modes = [r["mode"] for r in ticks]
    seen = set()
    start = 0
    for k in range(1, len(ticks) + 1):
        if k == len(ticks) or modes[k] != modes[start]:
            seg = xy[start:min(k + 1, len(ticks))]
            mode = modes[start]
            ax.plot(seg[:, 0], seg[:, 1], color=MODE_COLORS[mode], lw=2.0,
                    label=f"{label_prefix}{mode}" if mode not in seen else None)
            seen.add(mode)
            start = k
    pts = [r["decision"]["selected"][:2] for r in ticks if r.get("decision")]
    if pts:
        pts = np.array(pts)
        ax.scatter(pts[:, 0], pts[:, 1], s=8, marker="x", color="#9467bd",
                   label=f"{label_prefix}avoidance points")
    ax.set_xlim(extent[0], extent[1])
    ax.set_ylim(extent[2], extent[3])
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def _save(fig, path: Path):
    fig.savefig(path, dpi=100, metadata={"Software": None})


def emit_plots(trace, out_dir) -> list[Path]:
    """Write path.png and one potential_NNNN.pgm per recorded snapshot."""
    records = trace.records if hasattr(trace, "records") else list(trace)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plt = _figure()
    fig, ax = plt.subplots(figsize=(7, 5))
    _draw(ax, records)
    enabled = records[0].get("avoidance_enabled", True)
    ax.set_title(f"{records[0]['scenario']['name']} "
                 f"(avoidance {'on' if enabled else 'off'})")
    ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    written = [out / "path.png"]
    _save(fig, written[0])
    plt.close(fig)
    for r in records:
        snap = r.get("snapshot") if r["type"] == "tick" else None
        if snap is None:
            continue
        h, w = snap["shape"]
        img = np.frombuffer(bytes.fromhex(snap["u8"]), dtype=np.uint8).reshape(h, w)[::-1]
        p = out / f"potential_{r['tick']:04d}.pgm"
        p.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())
        written.append(p)
    return written


def emit_comparison(traces, out_path, titles=None) -> Path:
    """Side-by-side panels sharing x and y axes."""
    plt = _figure()
    n = len(traces)
    if n == 0:
        raise ValueError("no traces to compare")
    fig, axes = plt.subplots(1, n, figsize=(5 * n, 4.5), sharex=True, sharey=True, squeeze=False)
    for k, tr in enumerate(traces):
        records = tr.records if hasattr(tr, "records") else list(tr)
        ax = axes[0, k]
        _draw(ax, records)
        if titles is not None:
            title = titles[k]
        else:
            on = records[0].get("avoidance_enabled", True)
            title = f"{records[0]['scenario']['name']} (avoidance {'on' if on else 'off'})"
        ax.set_title(title, fontsize=9)
    axes[0, 0].legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _save(fig, out_path)
    plt.close(fig)
    return out_path
