"""Channel calculus for Bell strategies.

Core modules are imported eagerly; ``analysis`` and ``search`` pull in the
optimisation stack and are loaded on first attribute access.
"""
from .tensor_core import *  # noqa: F401,F403
from .channels import *  # noqa: F401,F403
from .dilations import *  # noqa: F401,F403
from .bell import *  # noqa: F401,F403
from .simulation import *  # noqa: F401,F403

__version__ = "0.1.0"

_LAZY = ("analysis", "search", "sampling", "files")


def __getattr__(name):
    import importlib
    if name in _LAZY:
        return importlib.import_module(f".{name}", __name__)
    for mod in ("analysis", "search"):
        m = importlib.import_module(f".{mod}", __name__)
        if name in getattr(m, "__all__", ()):
            return getattr(m, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
