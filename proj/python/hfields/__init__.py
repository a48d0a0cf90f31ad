from ._hfields import *  # noqa: F401,F403
from ._hfields import __doc__  # noqa: F401
