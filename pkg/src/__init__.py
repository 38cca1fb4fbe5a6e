"""
Arena skill simulator: behavior trees with scripted or learned leaves
"""
