"""
Cache module initialization
"""
from .feature_cache import feature_cache, init_cache, FeatureCache

__all__ = [
    'feature_cache',
    'init_cache',
    'FeatureCache'
]
