"""Multi-contact whole-body retargeting: feasible postures and contact
forces from live operator effector commands."""

__version__ = "0.1.0"
