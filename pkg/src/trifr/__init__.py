"""Energy-stable flux reconstruction operators on triangles."""

__version__ = "0.1.0"
