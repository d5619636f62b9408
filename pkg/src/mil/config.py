"""
Model and training configuration.

Config files are flat UTF-8 ``key = value`` text, one pair per line, ``#``
starting a comment. Unknown and repeated keys are rejected.
"""

import hashlib
import logging
from pathlib import Path
from typing import Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.constants.common_constants import (
    Discretization,
    InstancePooling,
    LrSchedules,
    ModelDefaults,
    OptimizerDefaults,
    SsmDefaults,
    SsmModes,
    StripeEncoderDefaults,
    TokenSelectionDefaults,
)
from src.errors import ContractViolation
from src.settings import parse_key_values, read_settings_file

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ModelConfig(BaseModel):
    """Architecture, ablation switches and optimiser settings of one run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    in_features: int = Field(default=ModelDefaults.IN_FEATURES, ge=1)
    d_model: int = Field(default=ModelDefaults.D_MODEL, ge=1)
    state_dim: int = Field(default=SsmDefaults.STATE_DIM, ge=1)
    n_blocks: int = Field(default=ModelDefaults.N_BLOCKS, ge=1)
    k_classes: int = Field(default=ModelDefaults.K_CLASSES, ge=2)
    ssm_mode: str = SsmModes.DEFAULT
    n_heads: int = Field(default=SsmDefaults.N_HEADS, ge=1)
    discretization: str = Discretization.DEFAULT

    use_cts: bool = True
    cts_ratio: float = TokenSelectionDefaults.RATIO
    local_channels: int = Field(default=TokenSelectionDefaults.LOCAL_CHANNELS, ge=0)
    instance_pooling: str = InstancePooling.DEFAULT
    aux_weight: float = Field(default=ModelDefaults.AUX_WEIGHT, ge=0.0)

    use_s2pe: bool = True
    s2pe_kernel: int = StripeEncoderDefaults.KERNEL_SIZE
    s2pe_dilation: int = Field(default=StripeEncoderDefaults.DILATION, ge=1)
    s2pe_residual: bool = StripeEncoderDefaults.RESIDUAL

    overlap: bool = True
    attention_dim: int = Field(default=ModelDefaults.ATTENTION_DIM, ge=1)

    learning_rate: float = Field(default=OptimizerDefaults.LEARNING_RATE, gt=0.0)
    weight_decay: float = Field(default=OptimizerDefaults.WEIGHT_DECAY, ge=0.0)
    lr_schedule: str = LrSchedules.CONSTANT
    epochs: int = Field(default=OptimizerDefaults.EPOCHS, ge=1)
    validation_fraction: float = Field(default=OptimizerDefaults.VALIDATION_FRACTION, ge=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0)

    @field_validator("cts_ratio")
    @classmethod
    def _ratio_in_range(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError(f"cts_ratio must lie in [0, 1), got {value}")
        return value

    @field_validator("s2pe_kernel")
    @classmethod
    def _kernel_odd(cls, value: int) -> int:
        if value < 1 or value % 2 == 0:
            raise ValueError(f"s2pe_kernel must be odd and positive, got {value}")
        return value

    @field_validator("ssm_mode")
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in SsmModes.ALL:
            raise ValueError(f"ssm_mode must be one of {SsmModes.ALL}, got {value!r}")
        return value

    @field_validator("discretization")
    @classmethod
    def _known_discretization(cls, value: str) -> str:
        if value not in Discretization.ALL:
            raise ValueError(f"discretization must be one of {Discretization.ALL}, got {value!r}")
        return value

    @field_validator("instance_pooling")
    @classmethod
    def _known_pooling(cls, value: str) -> str:
        if value not in InstancePooling.ALL:
            raise ValueError(f"instance_pooling must be one of {InstancePooling.ALL}, got {value!r}")
        return value

    @field_validator("lr_schedule")
    @classmethod
    def _known_schedule(cls, value: str) -> str:
        if value not in LrSchedules.ALL:
            raise ValueError(f"lr_schedule must be one of {LrSchedules.ALL}, got {value!r}")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "ModelConfig":
        if self.ssm_mode == SsmModes.SCALAR and self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        if self.local_channels > self.d_model:
            raise ValueError(
                f"local_channels {self.local_channels} exceeds the {self.d_model} channels"
            )
        return self

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        return cls.build(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        """Learning rate used for selective-scan aggregators on foundation-model features."""
        values = {"learning_rate": OptimizerDefaults.FULL_SCALE_LEARNING_RATE}
        values.update(overrides)
        return cls.build(**values)

    @classmethod
    def build(cls, **values) -> "ModelConfig":
        """Construct and report invalid values as ``ContractViolation``."""
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ContractViolation(f"invalid model config: {exc}") from None

    def replace(self, **changes) -> "ModelConfig":
        values = self.model_dump()
        values.update(changes)
        return type(self).build(**values)

    @classmethod
    def from_text(cls, text: str, source: str = "<text>") -> "ModelConfig":
        return cls.build(**parse_key_values(text, source))

    @classmethod
    def from_file(cls, path: PathLike) -> "ModelConfig":
        config = cls.build(**read_settings_file(path))
        logger.debug("Loaded config %s from %s", config.fingerprint(), path)
        return config

    def to_text(self) -> str:
        lines = []
        for key, value in self.model_dump().items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def write(self, path: PathLike) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:12]
