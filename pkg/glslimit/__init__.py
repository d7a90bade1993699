"""Обобщённый МНК с коррелированным шумом и предел полной корреляции."""

__version__ = "0.1.0"

__all__ = ("__version__",)
