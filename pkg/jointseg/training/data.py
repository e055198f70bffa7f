"""
Seeded synthetic segmentation data.

Image i is rendered from `default_rng([seed, i])`: a textured background
(class 1) with coloured rectangles, disks and triangles (classes 2..S, one
shape type and one colour per class). Every image contains class
2 + (i mod (S−1)), so any S−1 consecutive images cover all classes.
"""

import logging
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Protocol, Sequence, Union

import numpy as np

from ..errors import DataError
from ..imaging import class_color, read_image, read_mask, write_image, write_mask

logger = logging.getLogger(__name__)

SHAPES = ("rectangle", "disk", "triangle")
MAX_EXTRA_SHAPES = 2
TEXTURE_AMPLITUDE = 0.06
MANIFEST = "dataset.txt"


@dataclass
class Sample:
    image: np.ndarray  # float32 (3, H, W) in [0, 1]
    labels: np.ndarray  # uint8 (H, W) in 1..S


@dataclass
class Batch:
    images: np.ndarray  # (N, 3, H, W)
    labels: np.ndarray  # (N, H, W)


class Dataset(Protocol):
    num_classes: int

    def __len__(self) -> int: ...

    def __getitem__(self, index: int) -> Sample: ...


def _shape_mask(kind: str, rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = rng.uniform(0.2, 0.8, 2) * size
    extent = rng.uniform(size / 7, size / 3.5)
    if kind == "rectangle":
        aspect = rng.uniform(0.6, 1.6)
        return (np.abs(yy - cy) <= extent / aspect) & (np.abs(xx - cx) <= extent * aspect)
    if kind == "disk":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= extent**2
    angles = rng.uniform(0, 2 * np.pi) + np.array([0.0, 2.1, 4.2])
    vy, vx = cy + extent * np.sin(angles), cx + extent * np.cos(angles)
    signs = [
        (xx - vx[j]) * (vy[k] - vy[j]) - (yy - vy[j]) * (vx[k] - vx[j])
        for j, k in ((0, 1), (1, 2), (2, 0))
    ]
    return (np.all([s >= 0 for s in signs], axis=0)) | (np.all([s <= 0 for s in signs], axis=0))


class SyntheticDataset:
    def __init__(
        self,
        count: int,
        image_size: int = 64,
        num_classes: int = 6,
        noise: float = 0.04,
        seed: int = 1234,
        start: int = 0,
    ) -> None:
        self.count = count
        self.image_size = image_size
        self.num_classes = num_classes
        self.noise = noise
        self.seed = seed
        self.start = start

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> Sample:
        if not 0 <= index < self.count:
            raise IndexError(index)
        return self.render(self.start + index)

    def render(self, index: int) -> Sample:
        rng = np.random.default_rng([self.seed, index])
        size = self.image_size
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
        freq = rng.uniform(0.05, 0.25, 2)
        phase = rng.uniform(0, 2 * np.pi)
        texture = TEXTURE_AMPLITUDE * np.sin(freq[0] * yy + freq[1] * xx + phase)
        image = class_color(1)[:, None, None] + texture[None]
        labels = np.ones((size, size), dtype=np.uint8)

        shape_classes = self.num_classes - 1
        classes = [2 + index % shape_classes]
        extra = int(rng.integers(0, MAX_EXTRA_SHAPES + 1))
        classes += [int(c) for c in rng.integers(2, self.num_classes + 1, size=extra)]
        for label in classes:
            mask = _shape_mask(SHAPES[(label - 2) % len(SHAPES)], rng, size)
            labels[mask] = label
            image[:, mask] = class_color(label)[:, None]

        image = image + rng.normal(0.0, self.noise, image.shape)
        return Sample(np.clip(image, 0.0, 1.0).astype(np.float32), labels)

    def split(self, count: int) -> "SyntheticDataset":
        """A disjoint continuation (e.g. held-out evaluation images)."""
        return SyntheticDataset(
            count, self.image_size, self.num_classes, self.noise, self.seed, self.start + self.count
        )


class FolderDataset:
    """Dataset written by `write_dataset`."""

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)
        manifest = self.root / MANIFEST
        if not manifest.exists():
            raise DataError(f"no {MANIFEST} in {self.root}")
        values = dict(
            line.split("=", 1) for line in manifest.read_text().split("\n") if "=" in line
        )
        self.count = int(values["count"])
        self.num_classes = int(values["num_classes"])
        self.image_size = int(values["image_size"])

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> Sample:
        if not 0 <= index < self.count:
            raise IndexError(index)
        name = f"{index:05d}.png"
        image = read_image(self.root / "images" / name)
        return Sample(image, read_mask(self.root / "labels" / name))


def write_dataset(dataset: SyntheticDataset, root: Union[str, Path]) -> Path:
    target = Path(root)
    for i in range(len(dataset)):
        sample = dataset[i]
        write_image(target / "images" / f"{i:05d}.png", sample.image)
        write_mask(target / "labels" / f"{i:05d}.png", sample.labels)
    (target / MANIFEST).write_text(
        f"count={len(dataset)}\nnum_classes={dataset.num_classes}\n"
        f"image_size={dataset.image_size}\nseed={dataset.seed}\n"
    )
    logger.info(f"DATASET_WRITTEN: {len(dataset)} samples -> {target}")
    return target


def make_batch(dataset: Dataset, indices: Sequence[int]) -> Batch:
    samples = [dataset[int(i)] for i in indices]
    return Batch(
        images=np.stack([s.image for s in samples]),
        labels=np.stack([s.labels for s in samples]),
    )


def batch_indices(count: int, batch_size: int, steps: int, seed: int) -> List[np.ndarray]:
    """Index lists for `steps` batches, reshuffled each epoch."""
    rng = np.random.default_rng(seed)
    order: np.ndarray = np.empty(0, dtype=np.int64)
    out: List[np.ndarray] = []
    for _ in range(steps):
        while order.size < batch_size:
            order = np.concatenate([order, rng.permutation(count)])
        out.append(order[:batch_size])
        order = order[batch_size:]
    return out


def iterate_batches(
    dataset: Dataset,
    batch_size: int,
    steps: int,
    seed: int,
    prefetch: int = 2,
) -> Iterator[Batch]:
    """Batches rendered ahead on a producer thread through a bounded queue."""
    plan = batch_indices(len(dataset), batch_size, steps, seed)
    channel: "queue.Queue[Optional[Union[Batch, BaseException]]]" = queue.Queue(maxsize=prefetch)
    stop = threading.Event()

    def produce() -> None:
        try:
            for indices in plan:
                if stop.is_set():
                    return
                channel.put(make_batch(dataset, indices))
        except BaseException as e:  # handed to the consumer
            channel.put(e)
            return
        channel.put(None)

    worker = threading.Thread(target=produce, name="batch-producer", daemon=True)
    worker.start()
    try:
        while True:
            item = channel.get()
            if item is None:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        while worker.is_alive():
            try:
                channel.get_nowait()
            except queue.Empty:
                worker.join(timeout=0.05)
