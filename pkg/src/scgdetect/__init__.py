"""ECG-free systolic complex detection in seismocardiogram traces."""

__version__ = "0.1.0"
