"""
Model and input file formats.
"""
