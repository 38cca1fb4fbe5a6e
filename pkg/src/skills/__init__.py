"""
Skill-training environments, rewards and curriculum
"""
