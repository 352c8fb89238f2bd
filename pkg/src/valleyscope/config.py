"""Experiment configuration: nested dataclasses loaded from JSON, validated against a bundled schema."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema


@dataclass
class DatasetSpec:
    kind: str = "optdigits"  # optdigits | bas | prototypes | patterns
    train_path: str | None = None  # None: bundled optdigits.tra
    test_path: str | None = None
    threshold: int = 8
    train_count: int = 1024
    test_count: int = 440
    drop: str = "right"
    n: int = 4  # bas side length
    n_classes: int = 8
    n_pixels: int = 16
    per_class: int = 8
    test_per_class: int = 4
    flip_prob: float = 0.05
    seed: int = 0


@dataclass
class ModelSpec:
    n_hidden: int = 64
    init_scale: float = 0.01


@dataclass
class TrainSpec:
    epochs: int = 100
    learning_rate: float = 0.05
    cd_steps: int = 5
    weight_decay: float = 0.0
    decay_power: float = 1.0
    w_cap: float | None = 0.5
    batch_size: int | None = None
    exact: bool = False
    checkpoints: list = field(default_factory=list)


@dataclass
class EmbeddingSpec:
    M: int | None = None  # None: smallest lattice that fits
    N: int | None = None
    c: int = 4
    scale: float = 1.0
    j_floor: float = 1e-4


@dataclass
class AnnealSpec:
    beta_start: float = 0.1
    beta_end: float = 10.0
    sweeps: int = 1000


@dataclass
class McmcSpec:
    chain_sweeps: int = 100
    relax_sweeps: int = 1000


@dataclass
class CompareSpec:
    pre_steps: int = 1
    hist_bins: int = 10
    escape_temperatures: list = field(default_factory=lambda: [0.2, 0.25, 0.3, 0.35, 0.4, 0.5, 0.6])
    low_t_count: int | None = None
    trials: int = 50
    max_jumps: int = 100_000
    max_valleys: int | None = None  # characterize only the lowest-energy valleys of the annealer registry
    warming_rungs: list = field(default_factory=lambda: [[round(0.1 * k, 10), 200] for k in range(1, 13)])
    width_traces: int = 1
    annealer_backend: str | None = None  # None: use the top-level backend


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    embedding: EmbeddingSpec = field(default_factory=EmbeddingSpec)
    anneal: AnnealSpec = field(default_factory=AnnealSpec)
    mcmc: McmcSpec = field(default_factory=McmcSpec)
    compare: CompareSpec = field(default_factory=CompareSpec)
    backend: str = "local-sa"
    task_reads: int = 1000
    sample_reads: int = 10_000
    reconstruct_mask: list | None = None  # visible indices to hide; None: bottom half of the pixel rows
    generate_k: int = 5
    generate_classes: list | None = None
    scales: list = field(default_factory=lambda: list(range(1, 11)))
    label_fallback: bool = False
    max_test: int | None = None  # evaluate only the first max_test test patterns
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def fingerprint(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc) -> "ExperimentConfig":
        jsonschema.validate(doc, schema())
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in doc:
                continue
            sub = _NESTED.get(f.name)
            kwargs[f.name] = sub(**doc[f.name]) if sub else doc[f.name]
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")


_NESTED = {
    "dataset": DatasetSpec,
    "model": ModelSpec,
    "train": TrainSpec,
    "embedding": EmbeddingSpec,
    "anneal": AnnealSpec,
    "mcmc": McmcSpec,
    "compare": CompareSpec,
}


def schema() -> dict:
    return json.loads((resources.files("valleyscope") / "config.schema.json").read_text())
