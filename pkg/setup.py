#!/usr/bin/env python3
"""
Setup script for scope-sim - Secure Network Coding Simulator
"""
from setuptools import setup
from pathlib import Path

readme_file = Path(__file__).parent / "README.md"
long_description = readme_file.read_text(encoding="utf-8") if readme_file.exists() else ""

setup(
    name="scope-sim",
    version="1.0.0",
    description="Secure network coding simulator with homomorphic EC-ElGamal and ECDSA, plus a crypto benchmark",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="MIT",

    packages=['lib'],
    py_modules=['scope_cli'],

    entry_points={
        "console_scripts": ["scope-sim=scope_cli:main"],
    },

    python_requires=">=3.10",

    install_requires=[
        "cryptography>=41",
    ],

    extras_require={
        "dev": [
            "pytest>=7.0",
            "pytest-cov>=4.0",
        ]
    },

    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Intended Audience :: Developers",
        "Topic :: Security :: Cryptography",
        "Topic :: System :: Networking",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Operating System :: OS Independent",
        "Environment :: Console",
    ],

    keywords=[
        "network-coding",
        "cope",
        "homomorphic-encryption",
        "elliptic-curve",
        "ecdsa",
        "simulation",
    ],
)
