"""Experiment configuration document (JSON); unknown keys are rejected."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import InputError
from .discriminator import ARMS, ClassifierConfig
from .graphrnn import GraphRnnConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FixedThreshold(_Strict):
    kind: Literal["fixed"] = "fixed"
    tau: float = Field(0.5, gt=-1, lt=1)


class OtsuThreshold(_Strict):
    kind: Literal["otsu"] = "otsu"
    bins: int = Field(256, ge=2)


class PreprocessingConfig(_Strict):
    atlas_name: str = "unknown"
    gsr: bool = False
    bandpass: bool = False
    low_hz: float = Field(0.01, gt=0)
    high_hz: float = Field(0.1, gt=0)
    threshold: Union[FixedThreshold, OtsuThreshold] = Field(
        default_factory=FixedThreshold, discriminator="kind"
    )
    transforms: list[Literal["reverse", "upper_triangular"]] = Field(default_factory=list)


class ClassSbm(_Strict):
    p_in: float = Field(ge=0, le=1)
    p_out: float = Field(ge=0, le=1)


class CohortConfig(_Strict):
    n: int = Field(30, ge=2)
    blocks: int = Field(2, ge=1)
    autism: ClassSbm = ClassSbm(p_in=0.8, p_out=0.1)
    control: ClassSbm = ClassSbm(p_in=0.6, p_out=0.3)
    count_per_class: int = Field(200, ge=1)


class CheckpointPaths(_Strict):
    autism: str
    control: str


class IoConfig(_Strict):
    manifest: str | None = None
    raw_cohort: str | None = None
    generated_cohort: str | None = None
    checkpoints: CheckpointPaths | None = None
    generated_per_class: int | None = Field(None, ge=1)


class ProtocolConfig(_Strict):
    arms: list[Literal["raw", "generated", "mixed"]] = Field(default_factory=lambda: list(ARMS))
    ratios: list[float] = Field(default_factory=lambda: [0.6])
    repeats: int = Field(10, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if not self.arms:
            raise ValueError("at least one arm is required")
        for r in self.ratios:
            if not 0.0 < r < 1.0:
                raise ValueError(f"ratio {r} outside (0, 1)")
        return self


class ExperimentConfig(_Strict):
    io: IoConfig = Field(default_factory=IoConfig)
    preprocessing: PreprocessingConfig = Field(default_factory=PreprocessingConfig)
    cohort: CohortConfig = Field(default_factory=CohortConfig)
    generator: GraphRnnConfig = Field(default_factory=GraphRnnConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Parse a config file; ``None`` yields all defaults. Relative io paths resolve against the file."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"{path}: config file not found")
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})")
    try:
        cfg = ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise InputError(f"{path}: invalid config\n{exc}")
    return _resolve_paths(cfg, path.parent)


def _resolve_paths(cfg: ExperimentConfig, base: Path) -> ExperimentConfig:
    def fix(p):
        return None if p is None else str((base / p).resolve()) if not Path(p).is_absolute() else p

    io = cfg.io
    update = {
        "manifest": fix(io.manifest),
        "raw_cohort": fix(io.raw_cohort),
        "generated_cohort": fix(io.generated_cohort),
    }
    if io.checkpoints is not None:
        update["checkpoints"] = CheckpointPaths(
            autism=fix(io.checkpoints.autism), control=fix(io.checkpoints.control)
        )
    return cfg.model_copy(update={"io": io.model_copy(update=update)})


def write_resolved(cfg: ExperimentConfig, out_dir: str | Path) -> None:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "config.json").write_text(
        json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
    )
