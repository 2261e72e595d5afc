"""
qhs: discrete-event simulator for hybrid HPC-quantum cluster scheduling
"""

__version__ = "0.1.0"
