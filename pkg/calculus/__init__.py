# calculus/__init__.py

# This file is intentionally left blank to make 'calculus' a Python package.
