"""C0 cubic Hermite finite elements for non-divergence elliptic problems with
oblique boundary conditions on smooth curved domains."""

__version__ = "0.1.0"
