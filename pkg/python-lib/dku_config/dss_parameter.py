import logging
from typing import Any, Callable, Iterable, Optional

from .custom_check import CustomCheck, CustomCheckError

logger = logging.getLogger(__name__)


class DSSParameterError(Exception):
    """Raised when at least one check of a parameter fails"""


class DSSParameter:
    """A validated configuration value

    The value is defaulted, checked for existence, cast, and then run
    through its checks, in that order, when the object is created.

    :param name: Name of the parameter
    :type name: str
    :param value: Raw value
    :type value: Any
    :param label: Name shown in error messages. Defaults to ``name``
    :type label: str | None
    :param checks: Check definitions, passed as kwargs to CustomCheck
    :type checks: Iterable[Mapping[str, Any]] | None
    :param required: Raise if the value (after defaulting) is missing
    :type required: bool
    :param cast_to: Callable applied to the value before the checks run
    :type cast_to: Callable[[Any], Any] | None
    :param default: Value used when ``value`` is None
    :type default: Any
    """

    def __init__(
        self,
        name: str,
        value: Any,
        label: Optional[str] = None,
        checks: Optional[Iterable[dict]] = None,
        required: bool = False,
        cast_to: Optional[Callable[[Any], Any]] = None,
        default: Any = None,
    ):
        self.name = name
        self.value = value if value is not None else default
        self.label = label or name
        self.required = required
        self.cast_to = cast_to
        self.checks = [CustomCheck(**check) for check in (checks or ())]

        value_exists = self.run_checks(
            [CustomCheck(type="exists")], raise_error=self.required
        )
        if value_exists:
            if self.cast_to:
                self.cast_value()
            self.run_checks(self.checks)

    def cast_value(self):
        self.run_checks([CustomCheck(type="is_castable", op=self.cast_to)])
        self.value = self.cast_to(self.value)

    def run_checks(self, checks, raise_error=True):
        """Run the given checks against the current value

        :param checks: Checks to run
        :type checks: Iterable[CustomCheck]
        :param raise_error: Raise on the first failure instead of
            returning False
        :type raise_error: bool

        :raises DSSParameterError: A check failed and ``raise_error``
            is set

        :return: Whether every check passed
        :rtype: bool
        """
        for check in checks:
            try:
                check.run(self.value)
            except CustomCheckError as err:
                if raise_error:
                    raise DSSParameterError(
                        self.format_failure_message(err)
                    ) from err
                return False
        logger.debug("All checks passed successfully for %s.", self.name)
        return True

    def format_failure_message(self, error: CustomCheckError) -> str:
        return f'Validation error with parameter "{self.label}": {error}'

    def __repr__(self):
        return f"DSSParameter(name={self.name}, value={self.value!r})"
