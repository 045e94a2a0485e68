"""Door detection in single grayscale images with a Kohonen self-organizing map."""

__version__ = "0.1.0"
