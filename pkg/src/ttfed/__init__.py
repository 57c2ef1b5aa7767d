"""Time-triggered federated learning simulator over a wireless uplink."""

__version__ = "0.1.0"
