import logging
import os

from speechmoe.constants import SEED_ENV_VAR


class Globals:
    """
    Singleton class for managing process-wide defaults.

    Usage Example:
        >>> Globals().default_seed  # SPEECHMOE_SEED if set, else 0
        0
        >>> Globals().workers = 4
        >>> print(Globals())
        <Globals: {'logging_level': 20, 'default_seed': 0, 'workers': 4}>
    """

    _instance = None
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if not self._initialized:
            self.logging_level = logging.INFO
            self.default_seed = _seed_from_env()
            self.workers = 1
            self.__class__._initialized = True

    def __repr__(self):
        return f"<Globals: {self.__dict__}>"


def _seed_from_env() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")
