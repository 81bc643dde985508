from pydantic import NonNegativeFloat
from models.base_model import NumericModel

VERIFY_HEADER = ("check", "passed", "seconds", "detail")


class CheckResult(NumericModel):
    name: str
    passed: bool
    detail: str = ""
    seconds: NonNegativeFloat = 0.0

    def row(self) -> tuple:
        return (self.name, self.passed, round(self.seconds, 3), self.detail.replace(",", ";"))
