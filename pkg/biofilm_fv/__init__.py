"""BDF2 finite-volume simulations of a Cahn-Hilliard biofilm growth model."""

__version__ = "0.1.0"
