"""Edge-count large deviations in Chung-Lu graphs with power-law weights."""

__version__ = "0.1.0"
