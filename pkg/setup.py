#!/usr/bin/env python3

import setuptools


def get_version():
    with open("debian/changelog", "r", encoding="utf-8") as f:
        return f.readline().split()[1][1:-1]


setuptools.setup(
    name="stickyflow",
    version=get_version(),
    description="Lagrangian solvers for one-dimensional sticky pressureless flows",
    license="MIT",
    packages=["stickyflow"],
    python_requires=">=3.8",
    install_requires=["numpy", "scipy", "matplotlib", "jsonschema"],
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["stickyflow = stickyflow.cli:main"]},
)
