"""
Configuration package for v2x-stacking.

This package handles loading runtime settings from the environment and .env files.
"""

from .settings import AppSettings, get_settings

__all__ = ["AppSettings", "get_settings"]
