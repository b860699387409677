"""
PMU Event Classification System - Data Module

Contains the phasor data model, the synthetic event generator and feature extraction.
"""
