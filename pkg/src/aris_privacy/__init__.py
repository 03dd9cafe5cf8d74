"""Active-RIS virtual partitioning for joint communication and anti-localization."""

__version__ = "0.1.0"
