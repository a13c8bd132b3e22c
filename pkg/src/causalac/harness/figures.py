"""Plots of benchmark records."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {"central": "o-", "local": "s--", "no-ac": "^:", "eventual": "d-."}


def figure_path(out: str | Path, suffix: str = ".png") -> Path:
    """Figure file next to a JSONL output: ``run.jsonl`` becomes ``run.png``."""
    return Path(out).with_suffix(suffix)


def plot_throughput(records: list[dict], path: str | Path) -> Path:
    """Throughput against network delay, one line per mode, log-scaled."""
    by_mode: dict[str, list[tuple[float, float]]] = {}
    for r in records:
        if r.get("kind") == "bench":
            by_mode.setdefault(r["mode"], []).append((r["net_delay_ms"], r["throughput_ops_per_s"]))
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for mode in sorted(by_mode):
        xs, ys = zip(*sorted(by_mode[mode]))
        ax.plot(xs, ys, _STYLE.get(mode, "x-"), label=mode)
    ax.set_yscale("log")
    ax.set_xlabel("network delay [ms]")
    ax.set_ylabel("throughput [ops/s, simulated]")
    ax.grid(True, which="both", alpha=0.3)
    if by_mode:
        ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
