"""Contextual bandits with relevance learning over continuous contexts
and arms, the baseline learners they are compared against, and the
simulation harness that runs them"""

__version__ = "0.1.0"
