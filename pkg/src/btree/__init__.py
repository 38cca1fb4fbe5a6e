"""
Behavior-tree engine, scripted tasks and navigation
"""
