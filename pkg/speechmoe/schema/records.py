from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from speechmoe.constants import METRIC_NAMES

Label = Literal["control", "depression"]


class ManifestEntry(BaseModel):
    """One subject: a reading and an interview recording plus the diagnosis label."""

    model_config = ConfigDict(extra="forbid")

    subject_id: str = Field(min_length=1)
    reading_path: str | None = Field(default=None, description="WAV of the reading task")
    interview_path: str | None = Field(default=None, description="WAV of the interview task")
    label: Label

    @property
    def target(self) -> int:
        return 1 if self.label == "depression" else 0


class SyntheticSpec(BaseModel):
    """Seeded tone dataset whose classes differ by dominant frequencies."""

    model_config = ConfigDict(extra="forbid")

    n_subjects: int = Field(default=40, ge=2)
    class_balance: float = Field(default=0.5, gt=0.0, lt=1.0, description="Share of class 1")
    # per class, per task: (reading tones, interview tones)
    tones: dict[Label, Tuple[Tuple[float, ...], Tuple[float, ...]]] = Field(
        default={
            "control": ((400.0, 900.0), (600.0, 1200.0)),
            "depression": ((700.0, 1500.0), (1000.0, 2000.0)),
        }
    )
    noise_level: float = Field(default=0.05, ge=0.0, description="Std of additive Gaussian noise")
    duration: float = Field(default=2.0, gt=0.0, description="Seconds per file")
    seed: int = 7

    @model_validator(mode="after")
    def check_disjoint(self) -> "SyntheticSpec":
        control = set(self.tones["control"][0]) | set(self.tones["control"][1])
        depression = set(self.tones["depression"][0]) | set(self.tones["depression"][1])
        if control & depression:
            raise ValueError(f"class tone sets overlap: {sorted(control & depression)}")
        return self


class Metrics(BaseModel):
    """Binary classification metrics with depression as the positive class."""

    model_config = ConfigDict(extra="forbid")

    accuracy: float = Field(ge=0.0, le=1.0)
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)
    specificity: float = Field(ge=0.0, le=1.0)
    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    tn: int = Field(ge=0)
    fn: int = Field(ge=0)
    # names of ratios whose denominator was zero (reported as 0)
    undefined: list[str] = Field(default_factory=list)

    def value(self, name: str) -> float:
        return float(getattr(self, name))


class FoldResult(BaseModel):
    model_config = ConfigDict(extra="forbid")

    run: int = Field(ge=0)
    fold: int = Field(ge=0)
    seed: int
    metrics: Metrics


class MetricSummary(BaseModel):
    """Mean and population std of one metric, in percent."""

    model_config = ConfigDict(extra="forbid")

    mean: float
    std: float

    def __str__(self) -> str:
        return f"{self.mean:.2f} ± {self.std:.2f}"


class RunReport(BaseModel):
    """Cross-validation outcome: every (run, fold) row plus the aggregate over all of them."""

    model_config = ConfigDict(extra="forbid")

    name: str = Field(default="run", description="Architecture label shown in tables")
    config: dict = Field(default_factory=dict, description="Echo of the ModelConfig")
    seed: int = 0
    runs: int = Field(ge=1)
    folds: int = Field(ge=1)
    entries: list[FoldResult] = Field(default_factory=list)
    aggregate: dict[str, MetricSummary] | None = None
    partial: bool = False
    wall_clock_seconds: float = Field(default=0.0, ge=0.0)

    @field_validator("aggregate")
    def check_metric_names(cls, v):
        if v is not None:
            unknown = set(v) - set(METRIC_NAMES)
            if unknown:
                raise ValueError(f"unknown aggregate metrics: {sorted(unknown)}")
        return v

    def expected_entries(self) -> int:
        return self.runs * self.folds

    def missing(self) -> list[tuple[int, int]]:
        have = {(e.run, e.fold) for e in self.entries}
        return [
            (r, f) for r in range(self.runs) for f in range(self.folds) if (r, f) not in have
        ]


class StepLog(BaseModel):
    """Losses recorded at one optimization step."""

    model_config = ConfigDict(extra="forbid")

    epoch: int
    step: int
    total: float
    cross_entropy: float
    importance: float | None = None
    load: float | None = None
