"""
speechmoe - speech-based depression recognition with mixture-of-experts heads
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("speech-moe")
except PackageNotFoundError:
    __version__ = "0.0.0"

from speechmoe.errors import *  # noqa: F403
from speechmoe.tensor import *  # noqa: F403
from speechmoe.schema import *  # noqa: F403
from speechmoe.components import *  # noqa: F403

from speechmoe import components, errors, schema, tensor

__all__ = (
    ["__version__"]
    + components.__all__
    + schema.__all__
    + tensor.__all__
)
