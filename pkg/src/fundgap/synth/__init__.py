"""Synthetic data with known effects, and brute-force reference estimators."""

from .dgp import DgpConfig, InfeasibleConfig, SimulatedData, simulate

__all__ = ["DgpConfig", "InfeasibleConfig", "SimulatedData", "simulate"]
