from ._stereomtl import *  # noqa: F401,F403
from ._stereomtl import StubLM, TTestResult  # noqa: F401
