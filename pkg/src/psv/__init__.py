"""Point set voting for partial point cloud analysis."""

__version__ = "0.1.0"
