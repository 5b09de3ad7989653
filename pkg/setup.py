from setuptools import setup, find_packages

setup(
    name="pymicg",
    version="0.1.0",
    description="Multidimensional Index of Child Growth toolkit",
    packages=find_packages(include=["pymicg*"]),
    package_data={"pymicg": ["data/*.json"]},
    install_requires=["numpy>=1.22", "scipy>=1.9", "pandas>=1.4", "matplotlib>=3.5"],
    entry_points={"console_scripts": ["micg=pymicg.cli:main"]},
    python_requires=">=3.9",
)
