"""Common utilities and shared components."""

# This file makes common a Python package.
