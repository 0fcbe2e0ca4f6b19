# paths/__init__.py

# This file is intentionally left blank to make 'paths' a Python package.
