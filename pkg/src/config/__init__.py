"""
Configuration models and loading
"""
