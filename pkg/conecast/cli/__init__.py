"""
Command-line commands and their console/CSV output.
"""
