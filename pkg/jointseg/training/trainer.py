"""
End-to-end rate-distortion training.

Two optimizers share the model: the main Adam owns every parameter except the
factorized prior's quantiles and follows the polynomial schedule; the aux Adam
owns only the quantiles, at a constant rate, and minimizes the quantile loss.
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, List, Optional, TextIO, Tuple, Union

import numpy as np

from ..coding.entropy_models import rate_loss
from ..config import RunConfig
from ..errors import DivergenceError
from ..networks.model import JointSegModel
from ..tensor.autograd import Tensor
from ..tensor.nn import Parameter
from .data import Batch, Dataset, iterate_batches
from .losses import cross_entropy, one_hot, rd_objective
from .optim import Adam, clip_grad_norm, poly_lr

logger = logging.getLogger(__name__)

DIVERGENCE_DUMP = "divergence.json"


@dataclass
class LossReport:
    step: int
    j: float
    j_dist: float
    j_rate: float
    alpha: float
    lr: float
    grad_norm: float
    aux_loss: float

    def log_line(self) -> str:
        return (
            f"step={self.step} J={self.j:.6f} J_dist={self.j_dist:.6f} "
            f"J_rate={self.j_rate:.6f} lr={self.lr:.6g} aux={self.aux_loss:.4f}"
        )


def partition_parameters(model: JointSegModel) -> Tuple[List[Parameter], List[Parameter]]:
    """(main, aux) parameter lists; aux holds only the quantiles."""
    quantiles = model.hyper_prior.quantiles
    main = [p for p in model.parameters() if p is not quantiles]
    return main, [quantiles]


class Trainer:
    def __init__(
        self,
        model: JointSegModel,
        config: RunConfig,
        dump_dir: Union[str, Path] = ".",
    ) -> None:
        self.model = model
        self.config = config
        self.dump_dir = Path(dump_dir)
        t = config.train
        self.main_params, self.aux_params = partition_parameters(model)
        self.main = Adam(
            self.main_params, t.lr_main, (t.beta1, t.beta2), weight_decay=t.weight_decay
        )
        self.aux = Adam(self.aux_params, t.lr_aux, (t.beta1, t.beta2))
        self.noise_rng = np.random.default_rng([t.seed, 7])
        self.max_steps = config.total_steps()
        self.step = 0

    def _dump_divergence(self, batch: Batch, values: dict) -> str:
        self.dump_dir.mkdir(parents=True, exist_ok=True)
        path = self.dump_dir / DIVERGENCE_DUMP
        norms = {
            name: float(np.linalg.norm(p.data)) for name, p in self.model.named_parameters()
        }
        path.write_text(
            json.dumps(
                {
                    "step": self.step,
                    "losses": values,
                    "batch_shape": list(batch.images.shape),
                    "non_finite_params": [n for n, v in norms.items() if not math.isfinite(v)],
                    "param_norms": norms,
                },
                indent=2,
            )
        )
        return str(path)

    def train_step(self, batch: Batch) -> LossReport:
        model, t = self.model, self.config.train
        model.train()
        model.zero_grad()
        height, width = batch.images.shape[2:]

        out = model.forward_train(Tensor(batch.images), self.noise_rng)
        j_dist = cross_entropy(out.logits, one_hot(batch.labels, model.config.num_classes))
        j_rate = rate_loss(out.p_r, out.p_h, height, width)
        j = rd_objective(j_dist, j_rate, t.alpha)
        values = {"J": j.item(), "J_dist": j_dist.item(), "J_rate": j_rate.item()}
        if not all(math.isfinite(v) for v in values.values()):
            dump = self._dump_divergence(batch, values)
            logger.error(f"TRAIN_DIVERGED: step {self.step} {values} dump={dump}")
            raise DivergenceError(f"non-finite objective at step {self.step}", dump_path=dump)

        j.backward()
        grad_norm = clip_grad_norm(self.main_params, t.clip_norm)
        lr = poly_lr(self.step, t.lr_main, self.max_steps)
        self.main.step(lr)

        self.aux.zero_grad()
        aux_loss = model.hyper_prior.aux_loss()
        aux_loss.backward()
        self.aux.step()

        report = LossReport(
            step=self.step,
            j=values["J"],
            j_dist=values["J_dist"],
            j_rate=values["J_rate"],
            alpha=t.alpha,
            lr=lr,
            grad_norm=grad_norm,
            aux_loss=aux_loss.item(),
        )
        self.step += 1
        return report

    def fit(
        self,
        dataset: Dataset,
        steps: Optional[int] = None,
        metrics_log: Optional[TextIO] = None,
        on_checkpoint: Optional[Callable[[int], None]] = None,
    ) -> List[LossReport]:
        """Run `steps` training steps (default: the schedule's τ_max)."""
        t = self.config.train
        steps = self.max_steps - self.step if steps is None else steps
        batches: Iterable[Batch] = iterate_batches(dataset, t.batch_size, steps, seed=t.seed)
        reports: List[LossReport] = []
        started = time.monotonic()
        for batch in batches:
            report = self.train_step(batch)
            reports.append(report)
            if metrics_log is not None:
                metrics_log.write(report.log_line() + "\n")
            if t.log_every and report.step % t.log_every == 0:
                logger.info(f"TRAIN_STEP: {report.log_line()}")
            if on_checkpoint and t.checkpoint_every and (report.step + 1) % t.checkpoint_every == 0:
                on_checkpoint(report.step + 1)
        logger.info(
            f"TRAIN_DONE: {len(reports)} steps in {time.monotonic() - started:.1f}s, "
            f"{self.main.rejected_steps} rejected"
        )
        self.model.eval()
        self.model.update_tables()
        return reports


def reports_to_jsonl(reports: Iterable[LossReport]) -> str:
    return "".join(json.dumps(asdict(r)) + "\n" for r in reports)
