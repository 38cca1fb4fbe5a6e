"""
Evaluation, benchmarking and export
"""
