"""Deterministic proof of work: sharded mining plus committee finality."""

__version__ = "0.1.0"
