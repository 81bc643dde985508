from pydantic import BaseModel, ConfigDict


class BaseConfigModel(BaseModel):
    """Base model with common configuration for all configuration models"""

    model_config = ConfigDict(
        extra="forbid",
        validate_assignment=True,
        populate_by_name=True,
        validate_default=True,
    )

    def with_updates(self, **changes) -> "BaseConfigModel":
        """Returns a validated copy with the given fields replaced"""
        data = self.model_dump(by_alias=False)
        data.update(changes)
        return type(self).model_validate(data)


class NumericModel(BaseModel):
    """Immutable value type that may carry numpy arrays or callables"""

    model_config = ConfigDict(
        frozen=True,
        arbitrary_types_allowed=True,
        populate_by_name=True,
    )
