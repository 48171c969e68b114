"""Lunar orbit determination and time synchronization from weak-signal GNSS."""

__version__ = "0.1.0"
