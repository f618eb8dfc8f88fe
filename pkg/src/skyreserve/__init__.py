"""Energy overhead of MVP conflict resolution for cruising eVTOL traffic."""

__version__ = "0.1.0"
