"""Regionalized optimization on finite posets."""

from regionalized._kernels import BACKEND
from regionalized.errors import *  # noqa: F401,F403
from regionalized.poset import (
    Poset,
    antichain,
    build_poset,
    chain,
    counting_coefficients,
    mobius_value,
    powerset,
    subsets_poset,
)

__version__ = "0.1.0"
