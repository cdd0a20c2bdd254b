"""
Hierarchical mapless navigation simulator package
"""
__version__ = "1.0.0"
