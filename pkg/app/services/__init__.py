"""Numerical services: series arithmetic, payoff kernel, series engine, pricer, scaling limit, tables."""
