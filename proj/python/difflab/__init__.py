"""Desk-scale diffusion laboratory with step-wise variation regularization."""

from difflab._difflab import *  # noqa: F401,F403
from difflab._difflab import __doc__  # noqa: F401
