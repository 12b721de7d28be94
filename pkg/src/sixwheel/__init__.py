"""Desk-scale simulator and learning stack for a six-wheeled articulated
vehicle with actively suspended pendulum arms."""

__version__ = "0.1.0"
