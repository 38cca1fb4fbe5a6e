"""
Policy networks, action distributions and weight files
"""
