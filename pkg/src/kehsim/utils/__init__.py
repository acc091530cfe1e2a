"""Utility functions for kehsim."""
