import math

import pytest

from dku_config import (
    CustomCheck,
    CustomCheckError,
    DkuConfig,
    DSSParameter,
    DSSParameterError,
)


class TestCustomCheck:
    @pytest.mark.parametrize(
        "check, value",
        [
            ({"type": "exists"}, 0),
            ({"type": "in", "op": (1, 2)}, 2),
            ({"type": "sup", "op": 0}, 0.1),
            ({"type": "sup_eq", "op": 1}, 1),
            ({"type": "inf_eq", "op": 1}, 1),
            ({"type": "between", "op": (1, 3)}, 3),
            ({"type": "between_strict", "op": (1, 3)}, 2),
            ({"type": "is_finite"}, 1e300),
            ({"type": "is_castable", "op": int}, "12"),
            ({"type": "custom", "op": True}, None),
        ],
    )
    def test_pass(self, check, value):
        CustomCheck(**check).run(value)

    @pytest.mark.parametrize(
        "check, value",
        [
            ({"type": "exists"}, None),
            ({"type": "exists"}, ""),
            ({"type": "exists"}, []),
            ({"type": "in", "op": (1, 2)}, 3),
            ({"type": "sup", "op": 0}, 0),
            ({"type": "sup_eq", "op": 1}, 0),
            ({"type": "inf_eq", "op": 1}, 2),
            ({"type": "between", "op": (1, 3)}, 4),
            ({"type": "between_strict", "op": (1, 3)}, 3),
            ({"type": "is_finite"}, math.inf),
            ({"type": "is_finite"}, "abc"),
            ({"type": "is_castable", "op": int}, "abc"),
            ({"type": "custom", "op": False}, None),
        ],
    )
    def test_fail(self, check, value):
        with pytest.raises(CustomCheckError):
            CustomCheck(**check).run(value)

    def test_unknown_type(self):
        with pytest.raises(CustomCheckError):
            CustomCheck(type="bogus")

    def test_messages(self):
        check = CustomCheck(type="sup_eq", op=1)
        assert "Currently 0" in check.format_err_msg(0)
        custom = CustomCheck(type="custom", op=False, err_msg="Bad {value}")
        assert custom.format_err_msg(7) == "Bad 7"


class TestDSSParameter:
    def test_default(self):
        param = DSSParameter(name="seed", value=None, default=0)
        assert param.value == 0

    def test_cast(self):
        param = DSSParameter(name="horizon", value="100", cast_to=int)
        assert param.value == 100

    def test_not_castable(self):
        with pytest.raises(DSSParameterError) as err:
            DSSParameter(
                name="horizon", label="Horizon", value="abc", cast_to=int
            )
        assert '"Horizon"' in str(err.value)

    def test_required(self):
        with pytest.raises(DSSParameterError):
            DSSParameter(name="horizon", value=None, required=True)

    def test_optional_missing_skips_checks(self):
        param = DSSParameter(
            name="stride",
            value=None,
            cast_to=int,
            checks=({"type": "sup_eq", "op": 1},),
        )
        assert param.value is None

    def test_check_failure(self):
        with pytest.raises(DSSParameterError) as err:
            DSSParameter(
                name="horizon",
                label="Horizon",
                value=0,
                checks=({"type": "sup_eq", "op": 1},),
            )
        assert str(err.value) == (
            'Validation error with parameter "Horizon": Should be greater '
            "than or equal to 1 (Currently 0)."
        )


class TestDkuConfig:
    def test_add_param(self):
        config = DkuConfig()
        config.add_param(name="horizon", value="10", cast_to=int)
        assert config.horizon == 10
        assert config["horizon"] == 10
        assert config.get_param("horizon").value == 10
        assert config.as_dict() == {"horizon": 10}

    def test_init(self):
        config = DkuConfig(
            d_x={"value": 5, "cast_to": int},
            seed={"value": None, "default": 3},
        )
        assert dict(config) == {"d_x": 5, "seed": 3}

    def test_init_without_value(self):
        with pytest.raises(ValueError):
            DkuConfig(d_x={"cast_to": int})

    def test_mapping(self):
        config = DkuConfig()
        config["mode"] = "run"
        config.seed = 4
        assert len(config) == 2
        assert list(config) == ["mode", "seed"]
        del config["mode"]
        assert "mode" not in config

    def test_missing_attribute(self):
        config = DkuConfig()
        with pytest.raises(AttributeError):
            config.horizon
        assert config.get_param("horizon") is None

    def test_check_failure(self):
        config = DkuConfig()
        with pytest.raises(DSSParameterError):
            config.add_param(
                name="mode",
                value="bogus",
                checks=({"type": "in", "op": ("run", "sweep")},),
            )
        assert "mode" not in config
