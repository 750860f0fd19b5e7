"""Doubly robust average treatment effect estimation with outcome-adaptive
highly adaptive lasso propensity scores."""

__version__ = "0.1.0"
