# This file makes tests/unit a Python package
