"""Parameter validation for the plugin's recipe and CLI configs"""

from .custom_check import CustomCheck, CustomCheckError
from .dku_config import DkuConfig
from .dss_parameter import DSSParameter, DSSParameterError
