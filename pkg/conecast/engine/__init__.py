"""
Streaming engine: stream geometry, state buffers and event propagation.
"""
