# runner/__init__.py

# This file is intentionally left blank to make 'runner' a Python package.
