"""
conecast - streaming, event-based CNN inference.
Feeds input rows (or single elements of a 1D signal) depth-first through a
convolutional network while keeping only a bounded cone of state in memory.
"""

__version__ = "1.0.0"
