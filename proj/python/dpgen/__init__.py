from ._dpgen import *  # noqa: F401,F403
from ._dpgen import __doc__  # noqa: F401
