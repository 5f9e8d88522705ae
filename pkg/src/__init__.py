"""
CapMass 1.0 - Source Package
"""
