"""Critical points and local maxima of chi random fields."""

__version__ = "0.1.0"
