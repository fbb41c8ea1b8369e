"""Setup file for the package. For configuration information, see ``pyproject.toml``."""

from setuptools import setup

setup()
