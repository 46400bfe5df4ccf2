import sys

import setuptools
from setuptools.command.test import test as TestCommand

with open("README.md", "r") as fh:
    long_description = fh.read()


class Test(TestCommand):
    def run_tests(self):
        import pytest

        errno = pytest.main(["tests/"])
        sys.exit(errno)


setuptools.setup(
    name="cprd",
    version="0.1.0",
    description="Simulator for the contact process with renewal dormancy",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["tests", "tests.*", "scripts"]),
    cmdclass={"test": Test},
    install_requires=[
        "numpy",
        "scipy",
        "networkx",
        "sortedcontainers",
        "pandas",
        "pytz",
    ],
    tests_require=["pytest", "pytest-env", "pytest-xdist"],
    entry_points={"console_scripts": ["cprd = cprd.experiments.cli:main"]},
    keywords=[
        "contact process",
        "interacting particle systems",
        "renewal process",
        "dormancy",
        "percolation",
        "simulation",
    ],
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
)
