# This file makes tests/unit/common a Python package
