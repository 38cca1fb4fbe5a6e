"""
Proximal policy optimization
"""
