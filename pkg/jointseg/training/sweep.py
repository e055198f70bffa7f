"""
Rate-distortion sweeps: train + evaluate once per grid point.

The grid is α × K × F × dilation triple; empty axes fall back to the base
config. Every row records both rate figures and the deployed (fused) cloud
complexity, so the same table feeds the RD plot and the ablation plots.
"""

import csv
import io
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

from rich.table import Table
from scipy import stats

from ..config import MODEL_STRIDE, RunConfig, apply_overrides
from ..errors import DataError
from ..metrics.complexity import complexity_report
from ..networks.model import build_model, save_model
from .data import Dataset
from .evaluate import evaluate
from .trainer import Trainer, reports_to_jsonl

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "alpha",
    "repetitions",
    "feature_maps",
    "dilations",
    "bpp_actual",
    "bpp_estimate",
    "miou",
    "params",
    "flops",
)
DILATION_SEPARATOR = "-"


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    repetitions: int
    feature_maps: int
    dilations: Tuple[int, ...]
    bpp_actual: float
    bpp_estimate: float
    miou: float
    params: int = 0
    flops: int = 0

    def label(self) -> str:
        d = DILATION_SEPARATOR.join(str(v) for v in self.dilations)
        return f"K={self.repetitions} F={self.feature_maps} d={d}"


@dataclass(frozen=True)
class SweepGrid:
    alphas: Tuple[float, ...]
    repetitions: Tuple[int, ...] = ()
    feature_maps: Tuple[int, ...] = ()
    dilations: Tuple[Tuple[int, ...], ...] = ()

    def points(self, base: RunConfig) -> Iterator[RunConfig]:
        axes = itertools.product(
            self.alphas,
            self.repetitions or (base.model.repetitions,),
            self.feature_maps or (base.model.feature_maps,),
            self.dilations or (base.model.dilations,),
        )
        for alpha, k, f, d in axes:
            yield apply_overrides(
                base,
                {
                    "train.alpha": alpha,
                    "model.repetitions": k,
                    "model.feature_maps": f,
                    "model.dilations": tuple(d),
                },
            )

    def __len__(self) -> int:
        return (
            len(self.alphas)
            * max(1, len(self.repetitions))
            * max(1, len(self.feature_maps))
            * max(1, len(self.dilations))
        )


def _run_name(config: RunConfig) -> str:
    m = config.model
    d = DILATION_SEPARATOR.join(str(v) for v in m.dilations)
    return f"a{config.train.alpha:g}_k{m.repetitions}_f{m.feature_maps}_d{d}"


def run_point(
    config: RunConfig,
    train_set: Dataset,
    eval_set: Dataset,
    steps: Optional[int] = None,
    run_dir: Optional[Path] = None,
) -> SweepRow:
    model = build_model(config.model, seed=config.train.seed)
    trainer = Trainer(model, config, dump_dir=run_dir or ".")
    reports = trainer.fit(train_set, steps=steps)
    report = evaluate(model, eval_set)
    height, width = eval_set[0].image.shape[1:]
    padded = (-(-height // MODEL_STRIDE) * MODEL_STRIDE, -(-width // MODEL_STRIDE) * MODEL_STRIDE)
    cloud = complexity_report(model, *padded, deployed=True).cloud
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        save_model(run_dir / "model.jsdw", model, config)
        (run_dir / "metrics.jsonl").write_text(reports_to_jsonl(reports))
    m = config.model
    return SweepRow(
        alpha=config.train.alpha,
        repetitions=m.repetitions,
        feature_maps=m.feature_maps,
        dilations=tuple(m.dilations),
        bpp_actual=report.bpp_actual,
        bpp_estimate=report.bpp_estimate,
        miou=report.miou,
        params=cloud.params,
        flops=cloud.flops,
    )


def run_sweep(
    base: RunConfig,
    grid: SweepGrid,
    train_set: Dataset,
    eval_set: Dataset,
    steps: Optional[int] = None,
    out_dir: Optional[Union[str, Path]] = None,
    on_row: Optional[Callable[[SweepRow], None]] = None,
) -> List[SweepRow]:
    rows: List[SweepRow] = []
    total = len(grid)
    for i, config in enumerate(grid.points(base)):
        name = _run_name(config)
        logger.info(f"SWEEP_RUN: {i + 1}/{total} {name}")
        run_dir = Path(out_dir) / name if out_dir is not None else None
        row = run_point(config, train_set, eval_set, steps=steps, run_dir=run_dir)
        logger.info(
            f"SWEEP_ROW: {name} bpp={row.bpp_actual:.4f} est={row.bpp_estimate:.4f} "
            f"mIoU={row.miou:.4f}"
        )
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows


def pareto_front(rows: Sequence[SweepRow]) -> List[SweepRow]:
    """Rows not dominated in (lower bpp, higher mIoU), sorted by bpp."""
    front: List[SweepRow] = []
    best = float("-inf")
    for row in sorted(rows, key=lambda r: (r.bpp_actual, -r.miou)):
        if row.miou > best and (not front or row.bpp_actual > front[-1].bpp_actual):
            front.append(row)
            best = row.miou
    return front


def rd_correlation(rows: Sequence[SweepRow]) -> float:
    """Spearman rank correlation between actual bpp and mIoU (NaN below 3 rows)."""
    if len(rows) < 3:
        return float("nan")
    result = stats.spearmanr([r.bpp_actual for r in rows], [r.miou for r in rows])
    return float(result[0])


def write_csv(rows: Sequence[SweepRow], path: Optional[Union[str, Path]] = None) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow(
            [
                repr(r.alpha),
                r.repetitions,
                r.feature_maps,
                DILATION_SEPARATOR.join(str(v) for v in r.dilations),
                repr(r.bpp_actual),
                repr(r.bpp_estimate),
                repr(r.miou),
                r.params,
                r.flops,
            ]
        )
    text = buffer.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(source: Union[str, Path]) -> List[SweepRow]:
    path = Path(source)
    if not path.exists():
        raise DataError(f"sweep table not found: {path}")
    reader = csv.DictReader(io.StringIO(path.read_text()))
    missing = set(CSV_COLUMNS[:3]) | {"bpp_actual", "miou"}
    missing -= set(reader.fieldnames or ())
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    rows: List[SweepRow] = []
    for line, record in enumerate(reader, start=2):
        try:
            dilations = record.get("dilations") or ""
            rows.append(
                SweepRow(
                    alpha=float(record["alpha"]),
                    repetitions=int(record["repetitions"]),
                    feature_maps=int(record["feature_maps"]),
                    dilations=tuple(int(v) for v in dilations.split(DILATION_SEPARATOR) if v),
                    bpp_actual=float(record["bpp_actual"]),
                    bpp_estimate=float(record.get("bpp_estimate") or "nan"),
                    miou=float(record["miou"]),
                    params=int(record.get("params") or 0),
                    flops=int(record.get("flops") or 0),
                )
            )
        except ValueError as e:
            raise DataError(f"{path}:{line}: {e}") from e
    return rows


def sweep_table(rows: Sequence[SweepRow], title: str = "RD sweep") -> Table:
    table = Table(title=title)
    table.add_column("α", justify="right", style="cyan")
    table.add_column("Model", style="cyan")
    table.add_column("bpp", justify="right", style="green")
    table.add_column("bpp (est.)", justify="right")
    table.add_column("mIoU", justify="right", style="green")
    table.add_column("Cloud params", justify="right")
    table.add_column("Cloud GFLOPs", justify="right")
    for r in sorted(rows, key=lambda r: r.bpp_actual):
        table.add_row(
            f"{r.alpha:g}",
            r.label(),
            f"{r.bpp_actual:.4f}",
            f"{r.bpp_estimate:.4f}",
            f"{r.miou:.4f}",
            f"{r.params:,}",
            f"{r.flops / 1e9:.3f}",
        )
    return table

