"""
Utility functions for qhs
"""
