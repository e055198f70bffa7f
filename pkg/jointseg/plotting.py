"""RD and complexity charts from sweep tables, written as vector graphics."""

import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .errors import DataError  # noqa: E402
from .training.sweep import SweepRow, pareto_front  # noqa: E402

logger = logging.getLogger(__name__)

FIGURE_SIZE = (6.4, 4.8)
DEFAULT_FORMAT = "svg"


def _groups(rows: Sequence[SweepRow]) -> Dict[str, List[SweepRow]]:
    grouped: Dict[str, List[SweepRow]] = defaultdict(list)
    for row in rows:
        grouped[row.label()].append(row)
    return {label: sorted(group, key=lambda r: r.bpp_actual) for label, group in grouped.items()}


def _save(fig: plt.Figure, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fmt = target.suffix.lstrip(".") or DEFAULT_FORMAT
    fig.tight_layout()
    fig.savefig(target, format=fmt)
    plt.close(fig)
    logger.info(f"PLOT_WRITTEN: {target}")
    return target


def plot_rd(rows: Sequence[SweepRow], path: Union[str, Path], title: str = "") -> Path:
    """mIoU over bpp; actual coded rate solid, noise-proxy estimate dashed."""
    if not rows:
        raise DataError("no sweep rows to plot")
    fig, ax = plt.subplots(figsize=FIGURE_SIZE)
    for label, group in _groups(rows).items():
        miou = [100 * r.miou for r in group]
        (line,) = ax.plot([r.bpp_actual for r in group], miou, "o-", label=label)
        ax.plot(
            [r.bpp_estimate for r in group],
            miou,
            linestyle="--",
            color=line.get_color(),
            alpha=0.7,
            label=f"{label} (estimate)",
        )
    front = pareto_front(rows)
    if len(front) > 1:
        ax.plot(
            [r.bpp_actual for r in front],
            [100 * r.miou for r in front],
            color="black",
            linewidth=0.8,
            label="Pareto front",
        )
    ax.set_xlabel("bpp")
    ax.set_ylabel("mIoU (%)")
    ax.set_title(title or "Rate-distortion")
    ax.grid(linestyle="--", alpha=0.4)
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_complexity(rows: Sequence[SweepRow], path: Union[str, Path]) -> Path:
    """Cloud GFLOPs and parameters against mIoU, one point per sweep row."""
    rows = [r for r in rows if r.flops > 0 and r.params > 0]
    if not rows:
        raise DataError("no sweep rows carry complexity columns")
    fig, (flops_ax, params_ax) = plt.subplots(1, 2, figsize=(2 * FIGURE_SIZE[0], FIGURE_SIZE[1]))
    for label, group in _groups(rows).items():
        miou = [100 * r.miou for r in group]
        flops_ax.scatter([r.flops / 1e9 for r in group], miou, label=label)
        params_ax.scatter([r.params / 1e6 for r in group], miou, label=label)
    flops_ax.set_xlabel("Cloud GFLOPs")
    params_ax.set_xlabel("Cloud parameters (M)")
    for ax in (flops_ax, params_ax):
        ax.set_ylabel("mIoU (%)")
        ax.grid(linestyle="--", alpha=0.4)
    params_ax.legend(fontsize="small")
    return _save(fig, path)
