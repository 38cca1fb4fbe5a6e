"""
Observation encoding
"""
