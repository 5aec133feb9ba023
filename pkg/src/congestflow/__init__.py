"""Two-sided JKO solver for congested density evolution on [0, 1], with numerical
checks of the associated energy estimates."""

__version__ = "0.1.0"
