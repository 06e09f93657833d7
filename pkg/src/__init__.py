"""Package marker for the project's `src` modules.

This file enables imports like `from src.solver import run_cavity`
in environments where implicit namespace packages are not reliable.
"""
