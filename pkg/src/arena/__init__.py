"""
Deterministic 2D arena simulation
"""
