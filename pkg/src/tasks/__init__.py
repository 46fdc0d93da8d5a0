"""
Tasks module initialization
"""
from .worker import parallel_map

__all__ = [
    'parallel_map'
]
