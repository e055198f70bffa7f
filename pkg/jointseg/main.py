#!/usr/bin/env python3
"""
jointseg command line.

Data generation, training, RD sweeps, edge encoding, cloud segmentation,
serving, decoder fusion, complexity benchmarks and plots. Library errors are
turned into exit codes here and nowhere else.
"""

import logging
import os
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import click
import numpy as np
from rich.console import Console

from .config import MODEL_STRIDE, PRESETS, RunConfig, apply_overrides, dump_config, load_config
from .errors import DivergenceError, JointSegError, NumericError, UsageError
from .imaging import read_image, write_mask
from .metrics.complexity import complexity_report
from .networks.model import (
    FUSION_TOLERANCE,
    JointSegModel,
    build_model,
    fuse_model,
    fusion_error,
    load_model,
    save_model,
)
from .plotting import plot_complexity, plot_rd
from .training.data import Dataset, FolderDataset, SyntheticDataset, write_dataset
from .training.evaluate import evaluate
from .training.sweep import (
    SweepGrid,
    SweepRow,
    pareto_front,
    rd_correlation,
    read_csv,
    run_sweep,
    sweep_table,
    write_csv,
)
from .training.trainer import Trainer
from .wire.client import Channel, EdgeClient, InProcessChannel
from .wire.codec import edge_encode
from .wire.container import BitstreamContainer, latent_grid
from .wire.server import ModelRegistry, serve

console = Console()

# === Constants ===
CONTAINER_SUFFIX = ".jsdc"
CHECKPOINT_SUFFIX = ".jsdw"
METRICS_LOG = "metrics.log"
SWEEP_TABLE = "sweep.csv"
DEFAULT_BENCH_SIZE = 513

# === Logging Configuration ===
APPLICATION_NAME = "jointseg"
DEFAULT_LOG_DIR = "/var/log/jointseg"
FALLBACK_LOG_DIR = "./logs"
ENV_LOG_DIR = "JOINTSEG_LOG_DIR"
LOG_FORMAT = (
    "%(asctime)s [%(levelname)8s] %(name)s[%(process)d] txn_id:%(txn_id)s - %(message)s"
)
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


@dataclass
class CliState:
    config: RunConfig
    txn_id: str


# === Logging Setup ===


def new_transaction_id() -> str:
    return str(uuid.uuid4())[:8]


def setup_logging(
    level: str = "INFO",
    enable_logging: bool = True,
    trace_mode: bool = False,
    txn_id: str = "",
) -> logging.Logger:
    """Linux-standard file logging with transaction tracing."""
    logger = logging.getLogger(APPLICATION_NAME)

    if not enable_logging:
        logger.disabled = True
        return logger
    logger.disabled = False

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    if trace_mode:
        level = "DEBUG"
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    override = os.getenv(ENV_LOG_DIR)
    if override:
        log_dir = Path(override)
    else:
        log_dir = Path(DEFAULT_LOG_DIR)
        if not log_dir.exists() or not os.access(log_dir, os.W_OK):
            log_dir = Path(FALLBACK_LOG_DIR)

    log_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_dir / f"{APPLICATION_NAME}.log")

    class TransactionFormatter(logging.Formatter):
        def format(self, record: logging.LogRecord) -> str:
            record.txn_id = txn_id
            return super().format(record)

    handler.setFormatter(TransactionFormatter(LOG_FORMAT, LOG_DATE_FORMAT))
    logger.addHandler(handler)
    return logger


def report_error(error: JointSegError) -> None:
    message = str(error).replace("\n", " ")
    if isinstance(error, DivergenceError) and error.dump_path:
        message += f" dump={error.dump_path}"
    click.echo(
        f"error code={error.exit_code} kind={type(error).__name__} msg={message}", err=True
    )


class JointSegGroup(click.Group):
    """Maps typed library errors to exit codes and one machine-readable line."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except JointSegError as e:
            logging.getLogger(APPLICATION_NAME).error(f"COMMAND_FAILED: {type(e).__name__}: {e}")
            report_error(e)
            ctx.exit(e.exit_code)


# === Helpers ===


def _state(ctx: click.Context) -> CliState:
    state: CliState = ctx.obj
    return state


def _parse_floats(text: Optional[str]) -> Tuple[float, ...]:
    if not text:
        return ()
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from e


def _parse_ints(text: Optional[str]) -> Tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from e


def _parse_dilation_grid(text: Optional[str]) -> Tuple[Tuple[int, ...], ...]:
    """`5-10-15,6-12-18` → ((5, 10, 15), (6, 12, 18))."""
    if not text:
        return ()
    return tuple(_parse_ints(triple.replace("-", ",")) for triple in text.split(","))


def _with_overrides(
    config: RunConfig,
    seed: Optional[int] = None,
    alpha: Optional[float] = None,
    k: Optional[int] = None,
    dilations: Optional[str] = None,
    feature_maps: Optional[int] = None,
    steps: Optional[int] = None,
) -> RunConfig:
    overrides: Dict[str, Any] = {
        "train.seed": seed,
        "train.alpha": alpha,
        "model.repetitions": k,
        "model.dilations": _parse_ints(dilations) or None,
        "model.feature_maps": feature_maps,
    }
    if steps is not None:
        overrides.update({"train.max_steps": steps, "train.epochs": 0})
    return apply_overrides(config, overrides)


def _datasets(config: RunConfig, data_dir: Optional[str]) -> Tuple[Dataset, Dataset]:
    """(train, held-out eval) from a gen-data directory or the synthetic generator."""
    if data_dir:
        root = Path(data_dir)
        train = FolderDataset(root / "train")
        held_out = root / "eval"
        return train, FolderDataset(held_out) if held_out.exists() else train
    d = config.data
    train = SyntheticDataset(
        d.train_count, d.image_size, config.model.num_classes, d.noise, d.seed
    )
    return train, train.split(d.eval_count)


def _load(path: str) -> JointSegModel:
    model, _ = load_model(path)
    return model


# === CLI ===


@click.group(cls=JointSegGroup)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Config file")
@click.option(
    "--preset",
    type=click.Choice(PRESETS),
    default="desk",
    show_default=True,
    help="Base configuration preset",
)
@click.option(
    "--log-level",
    default="INFO",
    help="Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)",
)
@click.option("--no-logging", is_flag=True, help="Disable logging completely")
@click.option("--trace", is_flag=True, help="Enable trace mode (DEBUG level)")
@click.pass_context
def main(
    ctx: click.Context,
    config_path: Optional[str],
    preset: str,
    log_level: str,
    no_logging: bool,
    trace: bool,
) -> None:
    """jointseg - learned edge/cloud codec with a joint segmentation decoder."""
    txn_id = new_transaction_id()
    logger = setup_logging(
        level=log_level, enable_logging=not no_logging, trace_mode=trace, txn_id=txn_id
    )
    config = load_config(config_path, preset)
    ctx.obj = CliState(config=config, txn_id=txn_id)
    logger.info(f"jointseg started - {ctx.invoked_subcommand} - Transaction: {txn_id}")


@main.command("gen-data")
@click.argument("out", type=click.Path(file_okay=False))
@click.option("--count", type=int, help="Training images (default: data.train_count)")
@click.option("--eval-count", type=int, help="Held-out images (default: data.eval_count)")
@click.option("--image-size", type=int, help="Square image side (default: data.image_size)")
@click.option("--seed", type=int, help="Generator seed (default: data.seed)")
@click.pass_context
def gen_data(
    ctx: click.Context,
    out: str,
    count: Optional[int],
    eval_count: Optional[int],
    image_size: Optional[int],
    seed: Optional[int],
) -> None:
    """Write a seeded synthetic dataset (train/ and eval/) to OUT."""
    config = apply_overrides(
        _state(ctx).config,
        {
            "data.train_count": count,
            "data.eval_count": eval_count,
            "data.image_size": image_size,
            "data.seed": seed,
        },
    )
    train, held_out = _datasets(config, None)
    root = Path(out)
    write_dataset(train, root / "train")
    write_dataset(held_out, root / "eval")
    console.print(
        f"[green]Wrote {len(train)} training and {len(held_out)} evaluation images "
        f"to {root}[/green]"
    )


def _model_overrides(func: Any) -> Any:
    for option in reversed(
        [
            click.option("--seed", type=int, help="Training seed"),
            click.option("--alpha", type=float, help="RD trade-off α in (0, 1)"),
            click.option("--k", "k", type=int, help="Over-parameterization repetitions K"),
            click.option("--dilations", help="Dilation rates, e.g. 5,10,15"),
            click.option("--feature-maps", type=int, help="Latent channels F"),
            click.option("--steps", type=int, help="Training steps (overrides epochs)"),
            click.option(
                "--data", "data_dir", type=click.Path(file_okay=False), help="gen-data directory"
            ),
        ]
    ):
        func = option(func)
    return func


@main.command()
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False), help="Run directory")
@click.option("--eval/--no-eval", "run_eval", default=True, help="Evaluate on held-out data")
@_model_overrides
@click.pass_context
def train(
    ctx: click.Context,
    out: str,
    run_eval: bool,
    seed: Optional[int],
    alpha: Optional[float],
    k: Optional[int],
    dilations: Optional[str],
    feature_maps: Optional[int],
    steps: Optional[int],
    data_dir: Optional[str],
) -> None:
    """Train a model; writes checkpoints, the metrics log and the final model."""
    config = _with_overrides(_state(ctx).config, seed, alpha, k, dilations, feature_maps, steps)
    train_set, held_out = _datasets(config, data_dir)
    run_dir = Path(out)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(dump_config(config))

    model = build_model(config.model, seed=config.train.seed)
    trainer = Trainer(model, config, dump_dir=run_dir)

    def checkpoint(step: int) -> None:
        path = save_model(run_dir / f"checkpoint-{step:06d}{CHECKPOINT_SUFFIX}", model, config)
        console.print(f"[cyan]Checkpoint {path}[/cyan]")

    console.print(f"[cyan]Training {config.total_steps()} steps (α={config.train.alpha})...[/cyan]")
    with open(run_dir / METRICS_LOG, "w") as metrics_log:
        reports = trainer.fit(train_set, metrics_log=metrics_log, on_checkpoint=checkpoint)
    final = save_model(run_dir / f"model{CHECKPOINT_SUFFIX}", model, config)
    if reports:
        console.print(f"Final: {reports[-1].log_line()}")
    console.print(f"[green]Model saved to {final}[/green]")
    if run_eval:
        console.print(f"Held-out: {evaluate(model, held_out).summary()}")


@main.command()
@click.option("--alphas", required=True, help="Comma-separated α values")
@click.option("--k-grid", "k_grid", help="Comma-separated K values")
@click.option("--feature-maps-grid", "f_grid", help="Comma-separated F values")
@click.option("--dilations-grid", "d_grid", help="Dilation triples, e.g. 5-10-15,6-12-18")
@click.option(
    "--out", "-o", required=True, type=click.Path(file_okay=False), help="Sweep directory"
)
@_model_overrides
@click.pass_context
def sweep(
    ctx: click.Context,
    alphas: str,
    k_grid: Optional[str],
    f_grid: Optional[str],
    d_grid: Optional[str],
    out: str,
    seed: Optional[int],
    alpha: Optional[float],
    k: Optional[int],
    dilations: Optional[str],
    feature_maps: Optional[int],
    steps: Optional[int],
    data_dir: Optional[str],
) -> None:
    """Train and evaluate once per grid point; writes the RD table."""
    config = _with_overrides(_state(ctx).config, seed, alpha, k, dilations, feature_maps, steps)
    grid = SweepGrid(
        alphas=_parse_floats(alphas),
        repetitions=_parse_ints(k_grid),
        feature_maps=_parse_ints(f_grid),
        dilations=_parse_dilation_grid(d_grid),
    )
    if not grid.alphas:
        raise UsageError("--alphas needs at least one value")
    train_set, held_out = _datasets(config, data_dir)
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    console.print(f"[cyan]Sweeping {len(grid)} runs...[/cyan]")
    rows = run_sweep(
        config,
        grid,
        train_set,
        held_out,
        out_dir=root,
        on_row=lambda row: console.print(
            f"  α={row.alpha:g} {row.label()} bpp={row.bpp_actual:.4f} mIoU={row.miou:.4f}"
        ),
    )
    table_path = root / SWEEP_TABLE
    write_csv(rows, table_path)
    console.print(sweep_table(rows))
    front = pareto_front(rows)
    console.print(f"Pareto front: {len(front)}/{len(rows)} rows")
    console.print(f"Spearman(bpp, mIoU) = {rd_correlation(rows):.3f}")
    console.print(f"[green]RD table written to {table_path}[/green]")


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False), help="Container path")
def encode(image: str, model_path: str, out: str) -> None:
    """Edge side: encode IMAGE into a bitstream container."""
    model = _load(model_path)
    container = edge_encode(model, read_image(image))
    Path(out).write_bytes(container.pack())
    console.print(
        f"[green]{out}: {container.height}x{container.width}, "
        f"{len(container.b_h) + len(container.b_r)} payload bytes, {container.bpp:.4f} bpp[/green]"
    )


@main.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_paths", multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--server", help="Decode on a remote server (host:port)")
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False), help="Mask PNG path")
@click.pass_context
def segment(
    ctx: click.Context, source: str, model_paths: Tuple[str, ...], server: Optional[str], out: str
) -> None:
    """Segment SOURCE (a container, or an image encoded on the fly) to a mask PNG."""
    models = [_load(path) for path in model_paths]
    if Path(source).suffix == CONTAINER_SUFFIX:
        container = BitstreamContainer.unpack(Path(source).read_bytes())
    else:
        if not models:
            raise UsageError("encoding an image needs --model")
        container = edge_encode(models[0], read_image(source))

    channel: Channel
    if server:
        channel = EdgeClient.from_listen(server, _state(ctx).config.endpoint.timeout)
    elif models:
        channel = InProcessChannel(ModelRegistry(models))
    else:
        raise UsageError("decoding needs --model or --server")
    try:
        mask = channel.segment(container)
    finally:
        if isinstance(channel, EdgeClient):
            channel.close()
    write_mask(out, mask)
    labels = np.unique(mask).tolist()
    console.print(f"[green]{out}: {mask.shape[0]}x{mask.shape[1]} mask, classes {labels}[/green]")


@main.command("serve")
@click.option(
    "--model",
    "model_paths",
    multiple=True,
    required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option("--listen", help="host:port (default: endpoint.listen)")
@click.option("--workers", type=int, help="Concurrent connections (default: endpoint.workers)")
@click.option("--timeout", type=float, help="Idle timeout seconds (default: endpoint.timeout)")
@click.pass_context
def serve_command(
    ctx: click.Context,
    model_paths: Tuple[str, ...],
    listen: Optional[str],
    workers: Optional[int],
    timeout: Optional[float],
) -> None:
    """Cloud side: serve decoding for the given checkpoints."""
    config = apply_overrides(
        _state(ctx).config,
        {"endpoint.listen": listen, "endpoint.workers": workers, "endpoint.timeout": timeout},
    )
    registry = ModelRegistry.from_paths(model_paths)
    console.print(
        f"[cyan]Serving models {registry.ids()} on {config.endpoint.listen} (Ctrl-C to stop)[/cyan]"
    )
    try:
        serve(registry, config.endpoint)
    except KeyboardInterrupt:
        console.print("[yellow]Stopped[/yellow]")


@main.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.argument("target", type=click.Path(dir_okay=False))
@click.option("--samples", default=8, show_default=True, help="Random latents to compare")
def fuse(source: str, target: str, samples: int) -> None:
    """Fold the training-time JD branches of SOURCE into single convolutions."""
    model, run_config = load_model(source)
    fused = fuse_model(model)
    error = fusion_error(model, fused, samples=samples)
    if not error <= FUSION_TOLERANCE:
        raise NumericError(
            f"fused decoder differs by {error:.3g} (> {FUSION_TOLERANCE}); not writing {target}"
        )
    save_model(target, fused, run_config)
    console.print(
        f"[green]{target}: JD {model.decoder.count_params():,} -> "
        f"{fused.decoder.count_params():,} params, max |Δ| = {error:.2e}[/green]"
    )


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--height", default=DEFAULT_BENCH_SIZE, show_default=True)
@click.option("--width", default=DEFAULT_BENCH_SIZE, show_default=True)
@click.option("--deployed/--as-built", default=True, help="Count JD in its fused form")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Also write CSV")
@click.pass_context
def bench(
    ctx: click.Context,
    model_path: Optional[str],
    height: int,
    width: int,
    deployed: bool,
    csv_path: Optional[str],
) -> None:
    """Static parameter and FLOP counts per network."""
    model = _load(model_path) if model_path else build_model(_state(ctx).config.model)
    model.eval()
    grid_h, grid_w = latent_grid(height, width)
    report = complexity_report(
        model, grid_h * MODEL_STRIDE, grid_w * MODEL_STRIDE, deployed=deployed
    )
    console.print(report.to_table())
    if csv_path:
        Path(csv_path).write_text(report.to_csv())
        console.print(f"[green]CSV written to {csv_path}[/green]")


@main.command()
@click.argument("tables", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False), help="RD plot (.svg)")
@click.option("--complexity", "complexity_out", type=click.Path(dir_okay=False))
@click.option("--title", default="", help="Plot title")
def plot(tables: Tuple[str, ...], out: str, complexity_out: Optional[str], title: str) -> None:
    """Render RD curves (and optionally complexity vs mIoU) from sweep tables."""
    rows: List[SweepRow] = []
    for table in tables:
        rows.extend(read_csv(table))
    console.print(f"[green]RD plot: {plot_rd(rows, out, title)}[/green]")
    if complexity_out:
        console.print(f"[green]Complexity plot: {plot_complexity(rows, complexity_out)}[/green]")


if __name__ == "__main__":
    main()
