"""Screaming-channel side-channel laboratory."""
