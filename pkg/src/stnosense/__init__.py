"""Macrospin simulator for injection-locked spin-torque oscillator biosensor arrays."""

__version__ = "0.1.0"
