"""Exact spectra, planted rare regions and gaplessness certificates for random local Hamiltonians."""

__version__ = "0.1.0"
