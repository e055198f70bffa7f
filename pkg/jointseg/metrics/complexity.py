"""
Static parameter and FLOP accounting.

Costs come from shape propagation (`Module.profile`), never from a forward
pass. One multiply-accumulate counts as 2 FLOPs; see `tensor.nn` for the
elementwise costs.
"""

import csv
import io
from dataclasses import dataclass, field
from typing import List, Tuple

from rich.table import Table

from ..networks.model import JointSegModel
from ..networks.reparam import fuse
from ..tensor.nn import Module, Shape

MAC_CONVENTION = "1 MAC = 2 FLOPs"
EDGE = ("E", "SE")
CLOUD = ("HD", "JD", "entropy")


def count_params(network: Module) -> int:
    return network.count_params()


def count_flops(network: Module, shape: Shape) -> int:
    return network.profile(shape).flops


@dataclass
class ComplexityRow:
    name: str
    params: int
    flops: int
    macs: int


@dataclass
class ComplexityReport:
    height: int
    width: int
    rows: List[ComplexityRow] = field(default_factory=list)
    convention: str = MAC_CONVENTION

    def row(self, name: str) -> ComplexityRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def _total(self, name: str, parts: Tuple[str, ...]) -> ComplexityRow:
        picked = [self.row(p) for p in parts]
        return ComplexityRow(
            name,
            sum(r.params for r in picked),
            sum(r.flops for r in picked),
            sum(r.macs for r in picked),
        )

    @property
    def edge(self) -> ComplexityRow:
        return self._total("edge", EDGE)

    @property
    def cloud(self) -> ComplexityRow:
        return self._total("cloud", CLOUD)

    @property
    def total(self) -> ComplexityRow:
        return self._total("total", EDGE + CLOUD)

    def all_rows(self) -> List[ComplexityRow]:
        return [*self.rows, self.edge, self.cloud, self.total]

    def to_table(self) -> Table:
        table = Table(title=f"Complexity at {self.height}x{self.width} ({self.convention})")
        table.add_column("Network", style="cyan")
        table.add_column("Params", justify="right", style="green")
        table.add_column("GFLOPs", justify="right", style="green")
        table.add_column("GMACs", justify="right")
        for row in self.all_rows():
            table.add_row(
                row.name, f"{row.params:,}", f"{row.flops / 1e9:.3f}", f"{row.macs / 1e9:.3f}"
            )
        return table

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["network", "params", "flops", "macs", "height", "width"])
        for row in self.all_rows():
            writer.writerow([row.name, row.params, row.flops, row.macs, self.height, self.width])
        return buffer.getvalue()


def complexity_report(
    model: JointSegModel, height: int, width: int, deployed: bool = False
) -> ComplexityReport:
    """
    Per-network parameters and FLOPs for a (height, width) input.

    With `deployed`, JD is counted as the fused inference network even when
    the model still carries its training-time branches (model must be in eval mode).
    """
    jd = model.decoder
    if deployed and not model.fused:
        jd = fuse(model.decoder)
    encoder = model.encoder.profile((3, height, width))
    latent = model.source_encoder.latent.profile(encoder.shape)
    source = model.source_encoder.profile(encoder.shape)
    hyper_shape = model.source_encoder.hyper.profile(latent.shape).shape
    hyper_decoder = model.hyper_decoder.profile(hyper_shape)
    decoder = jd.profile(latent.shape)
    entropy_params = model.hyper_prior.count_params() + model.latent_model.count_params()
    return ComplexityReport(
        height=height,
        width=width,
        rows=[
            ComplexityRow("E", model.encoder.count_params(), encoder.flops, encoder.macs),
            ComplexityRow("SE", model.source_encoder.count_params(), source.flops, source.macs),
            ComplexityRow(
                "HD", model.hyper_decoder.count_params(), hyper_decoder.flops, hyper_decoder.macs
            ),
            ComplexityRow("JD", jd.count_params(), decoder.flops, decoder.macs),
            ComplexityRow("entropy", entropy_params, 0, 0),
        ],
    )
