import logging
import math
from typing import Any

logger = logging.getLogger(__name__)

DEFAULT_ERROR_MESSAGES = {
    "exists": "This field is required.",
    "in": "Should be in {op}. (Currently {value})",
    "sup": "Should be greater than {op} (Currently {value}).",
    "sup_eq": "Should be greater than or equal to {op} (Currently {value}).",
    "inf_eq": "Should be less than or equal to {op} (Currently {value}).",
    "between": (
        "Should be between {op[0]} and {op[1]} inclusive "
        "(Currently {value})."
    ),
    "between_strict": (
        "Should be between {op[0]} and {op[1]} exclusive "
        "(Currently {value})."
    ),
    "is_finite": "Should be a finite number (Currently {value}).",
    "is_castable": (
        "Should be castable to {op} (Currently {value} with type "
        "{value_type})."
    ),
    "custom": "There has been an unknown error.",
}


class CustomCheckError(Exception):
    """Raised when the condition of a CustomCheck isn't met"""


class CustomCheck:
    """A single validation rule applied to a parameter value

    The rule is selected by ``type``; each type maps to a private
    ``_<type>`` method returning whether the value passes.

    :param type: Name of the check, e.g. "sup_eq"
    :type type: str
    :param op: Operand the value is compared to. Unused by some checks
    :type op: Any
    :param err_msg: Message used when the check fails. Formatted with
        ``value``, ``op`` and ``value_type``
    :type err_msg: str
    """

    def __init__(self, type, op: Any = None, err_msg: str = ""):
        self.type = type
        if not hasattr(self, f"_{type}"):
            raise CustomCheckError(f"Check of type {type} does not exist.")
        self.op = op
        self.err_msg = err_msg or DEFAULT_ERROR_MESSAGES.get(
            type, DEFAULT_ERROR_MESSAGES["custom"]
        )

    def run(self, value: Any = None):
        """Run the check

        :raises CustomCheckError: The value fails the check

        :return: None
        """
        passed = getattr(self, f"_{self.type}")(value)
        if not passed:
            raise CustomCheckError(self.format_err_msg(value))

    def format_err_msg(self, value: Any) -> str:
        return self.err_msg.format(
            value=value, op=self.op, value_type=type(value)
        )

    def _exists(self, value: Any) -> bool:
        return value not in ([], "", None)

    def _in(self, value: Any) -> bool:
        return value in self.op

    def _sup(self, value: Any) -> bool:
        return value > float(self.op)

    def _sup_eq(self, value: Any) -> bool:
        return value >= float(self.op)

    def _inf_eq(self, value: Any) -> bool:
        return value <= float(self.op)

    def _between(self, value: Any) -> bool:
        return float(self.op[0]) <= value <= float(self.op[1])

    def _between_strict(self, value: Any) -> bool:
        return float(self.op[0]) < value < float(self.op[1])

    def _is_finite(self, value: Any) -> bool:
        try:
            return math.isfinite(value)
        except TypeError:
            return False

    def _is_castable(self, value: Any) -> bool:
        try:
            self.op(value)
        except (TypeError, ValueError):
            return False
        return True

    def _custom(self, *args) -> bool:
        # `op` holds the already-evaluated condition
        return bool(self.op)
