from typing import Tuple
from pydantic import Field, PositiveFloat, PositiveInt, field_validator
from models.base_model import BaseConfigModel


class StudentConfig(BaseConfigModel):
    """Architecture and full-batch Adam settings shared by every network fit"""

    hidden_widths: Tuple[PositiveInt, ...] = (32, 32)
    epochs: PositiveInt = 2000
    lr: PositiveFloat = 1e-3
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: PositiveFloat = 1e-8
    patience: PositiveInt = 50
    min_improvement: float = Field(1e-8, ge=0)

    @field_validator("hidden_widths")
    def check_widths(cls, value):
        if len(value) == 0:
            raise ValueError("a student needs at least one hidden layer")
        return value

    @property
    def widths(self) -> Tuple[int, ...]:
        return (1,) + tuple(self.hidden_widths) + (1,)
