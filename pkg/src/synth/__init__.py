"""
Synthetic data module initialization
"""
from .generator import SynthConfig, SynthNight, generate, schedule_events
from .corpus import write_corpus

__all__ = [
    'SynthConfig',
    'SynthNight',
    'generate',
    'schedule_events',
    'write_corpus'
]
