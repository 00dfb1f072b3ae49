from collections.abc import MutableMapping
from typing import Any

from .dss_parameter import DSSParameter


class DkuConfig(MutableMapping):
    """Mapping of validated DSSParameter objects

    Behaves like a dict whose items are the parameters' values, with
    attribute access on top (``config.horizon`` is
    ``config["horizon"]``). Assigning an item creates a new, unchecked
    DSSParameter; use :meth:`add_param` to attach checks.
    """

    def __init__(self, **kwargs):
        """
        :param kwargs: Parameter definitions. Each value must be a dict
            with at least a "value" key; the other keys are passed to
            DSSParameter
        """
        object.__setattr__(self, "config", {})
        for name, definition in kwargs.items():
            if "value" not in definition:
                raise ValueError('Each init kwarg must have a "value" field.')
            definition = dict(definition)
            value = definition.pop("value")
            self.add_param(name=name, value=value, **definition)

    def add_param(self, name: str, value: Any = None, **kwargs):
        """Validate a value and store it under ``name``

        :param name: Name of the parameter
        :type name: str
        :param value: Raw value
        :type value: Any
        :param kwargs: See DSSParameter

        :raises dku_config.DSSParameterError: The value fails a check

        :return: None
        """
        self.config[name] = DSSParameter(name=name, value=value, **kwargs)

    def get_param(self, name: str) -> DSSParameter:
        return self.config.get(name)

    def as_dict(self):
        """Return the parameter values as a plain dict

        :rtype: dict[str, Any]
        """
        return {name: param.value for name, param in self.config.items()}

    def __delitem__(self, item):
        del self.config[item]

    def __getattr__(self, name):
        if name == "config":
            raise AttributeError(name)
        try:
            return self[name]
        except KeyError as err:
            raise AttributeError(name) from err

    def __setattr__(self, key, value):
        self[key] = value

    def __getitem__(self, item):
        if item in self.config:
            return self.config[item].value
        raise KeyError(item)

    def __setitem__(self, key, value):
        self.add_param(name=key, value=value)

    def __iter__(self):
        return iter(self.config)

    def __len__(self):
        return len(self.config)

    def __repr__(self):
        return repr(self.config)
