"""
Command implementations for qhs
"""
