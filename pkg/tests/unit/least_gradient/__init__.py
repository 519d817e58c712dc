# This file makes tests/unit/least_gradient a Python package
