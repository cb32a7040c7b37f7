"""WeightFlow: learn distribution dynamics as a flow over density-network weights."""
__version__ = "0.1.0"
