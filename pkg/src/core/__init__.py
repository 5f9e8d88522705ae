"""
CapMass 1.0 - Core Package
Metric models, regions, quadrature, functionals, capacity backends and mass deficits.
"""
