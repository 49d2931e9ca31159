from configparser import ConfigParser
from pathlib import Path
import os

config = ConfigParser()
config_path = Path(os.environ.get("KPCLR_CONFIG", Path(__file__).parent.parent.joinpath("config.ini")))
config.read(config_path)
target_section = os.environ.get("KPCLR_TARGET", ("test" if "PYTEST_CURRENT_TEST" in os.environ else "defaults"))


_config_get_nonce = object()
def config_get(key: str, default=_config_get_nonce, section: str = None):
    """Read a setting from the active section of config.ini, then from [defaults]."""
    for s in (section or target_section, "defaults"):
        if config.has_option(s, key):
            return config.get(s, key)
    if default is _config_get_nonce:
        raise KeyError(f"Missing configuration key {key}")
    return default


def config_getfloat(key: str, default: float) -> float:
    return float(config_get(key, default))


def config_getint(key: str, default: int) -> int:
    return int(config_get(key, default))
