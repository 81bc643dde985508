"""
One-dimensional parabolic Monge-Ampere flow laboratory
"""
