"""Desk-scale O-RAN closed control loop: sliced RAN simulator, E2-lite, near-RT RIC, xApps."""
__version__ = "0.1.0"
