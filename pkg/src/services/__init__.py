"""
CapMass 1.0 - Services Package
Settings, run manifest, reports, scenario runner and verification suite.
"""
