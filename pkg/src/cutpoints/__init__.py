"""Cutpoints of transient birth-and-death chains, tree-walk occupation
statistics and the stack representation of Markov chains."""

from .errors import CutpointsError
from .resistance_chain import (ChainLaw, ResistanceProfile, TailTable, block_minimum_b,
                               block_p_sum, canonical, conditional_cut_probability,
                               cutpoint_probability, divergence_audit, explicit, geometric,
                               hit_before, make_profile, return_probability, tails)
from .trajectory import StopRule, Trajectory, absorb, first_passage, horizon

__version__ = "0.1.0"
