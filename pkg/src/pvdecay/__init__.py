"""Hourly page-view dynamics of front-page promoted articles."""

__version__ = "0.1.0"
