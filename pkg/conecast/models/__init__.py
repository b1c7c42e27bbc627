"""
Network definitions, generators and the dense reference forward pass.
"""
