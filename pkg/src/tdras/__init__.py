"""Time-dependent restricted-active-space SCF methods for 1D model atoms."""
__version__ = "0.1.0"
