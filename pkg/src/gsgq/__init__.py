"""Geo-social group queries over social-aware R-tree indexes."""

__version__ = "0.1.0"
