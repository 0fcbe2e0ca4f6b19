# solvers/__init__.py

# This file is intentionally left blank to make 'solvers' a Python package.
