"""
Utility functions for v2x-stacking.
"""

from .logger import get_logger, audit_event

__all__ = ['get_logger', 'audit_event']
