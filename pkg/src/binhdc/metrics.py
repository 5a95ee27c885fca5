"""Per-epoch run records shared by the trainers and the CLI."""

import json
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__


@dataclass
class EpochRecord:
    epoch: int
    train_acc: float
    train_loss: float = None
    val_acc: float = None
    lr: float = None
    wall_ms: float = 0.0
    extra: dict = field(default_factory=dict)


@dataclass
class RunMetrics:
    strategy: str
    epochs: list = field(default_factory=list)
    test_acc: float = None
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    version: str = None
    best_epoch: int = None

    def __post_init__(self):
        if self.version is None:
            self.version = describe_version()

    def add(self, record):
        expected = len(self.epochs) + 1
        if record.epoch != expected:
            raise ValueError(f"epoch {record.epoch} out of order, expected {expected}")
        self.epochs.append(record)

    @property
    def final_train_acc(self):
        return self.epochs[-1].train_acc if self.epochs else None

    def summary(self):
        return {
            "type": "summary",
            "strategy": self.strategy,
            "n_epochs": len(self.epochs),
            "best_epoch": self.best_epoch,
            "final_train_acc": self.final_train_acc,
            "test_acc": self.test_acc,
            "config": self.config,
            "seeds": self.seeds,
            "version": self.version,
        }

    def records(self):
        out = []
        for r in self.epochs:
            rec = {"type": "epoch", "strategy": self.strategy}
            rec.update(asdict(r))
            out.append(rec)
        out.append(self.summary())
        return out

    def write_jsonl(self, path):
        path = Path(path)
        with path.open("w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, default=_jsonable) + "\n")

    def write_table(self, path):
        """Flat CSV of the per-epoch trajectory for plotting."""
        cols = ["epoch", "train_acc", "train_loss", "val_acc", "lr", "wall_ms"]
        with Path(path).open("w") as fh:
            fh.write(",".join(["strategy"] + cols) + "\n")
            for r in self.epochs:
                vals = [_cell(getattr(r, c)) for c in cols]
                fh.write(",".join([self.strategy] + vals) + "\n")


def _cell(v):
    if v is None:
        return ""
    return str(int(v)) if isinstance(v, (int, np.integer)) else repr(float(v))


def _jsonable(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def describe_version():
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__
