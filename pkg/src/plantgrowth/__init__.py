"""Logistic plant-growth modelling, environment-conditioned growth-rate
regression, and an episodic growth simulator for control strategies."""

__version__ = "0.1.0"
