"""
Helper functions
"""
