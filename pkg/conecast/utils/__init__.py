"""
Run traces and evaluation metrics.
"""
