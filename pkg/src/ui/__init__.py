"""
PMU Event Classification System - UI Module

Contains the command-line front end.
"""
