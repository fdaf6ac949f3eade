"""Payoff functionals for branches and roots under ramified transport costs."""

__version__ = "0.1.0"
