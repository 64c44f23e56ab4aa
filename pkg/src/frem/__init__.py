"""Forward-reverse bridges and two-phase EM for stochastic reaction networks."""
import logging

from .model import PropensityFactor, ReactionChannel, SRNModel, reverse_model
from .oracle import TruncatedStateSpace, bridge_expectations, transition_prob

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "PropensityFactor", "ReactionChannel", "SRNModel", "reverse_model",
    "TruncatedStateSpace", "bridge_expectations", "transition_prob",
]
