"""Procedure planning with a description-grounded state space.

Given a start and a goal observation, predict the T intermediate action
steps. States are aligned with text descriptions of how objects look before
and after each step; a state decoder predicts the mid-states and a step
decoder predicts the steps, optionally refined by Viterbi decoding.
"""

__version__ = "0.1.0"
