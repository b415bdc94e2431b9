"""Carbon-aware placement and migration of VMs across renewable-powered modular data centers."""

__version__ = "0.1.0"
