"""
Link analysis for RIS-assisted UAV relaying under channel aging
"""

__version__ = "0.1.0"
