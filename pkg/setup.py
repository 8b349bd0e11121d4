from setuptools import setup, find_packages


PACKAGENAME = "dfaflow"
VERSION = "0.1.0"


setup(
    name=PACKAGENAME,
    version=VERSION,
    description="Flow-feature telemetry pipeline writing reports into RDMA memory",
    long_description="Flow-feature telemetry pipeline writing reports into RDMA memory",
    install_requires=["numpy", "jax", "mmh3", "scapy"],
    extras_require={"tests": ["pytest", "hypothesis"]},
    packages=find_packages(),
    package_data={
        "dfaflow": ("data/*.dat", "data/README.txt", "tests/testing_data/*.hex")
    },
    entry_points={"console_scripts": ["dfaflow=dfaflow.cli:main"]},
)
