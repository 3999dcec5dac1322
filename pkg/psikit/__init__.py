"""psikit: phase subtraction imaging toolkit for ultrafast plane-wave ultrasound."""

__version__ = "0.1.0"
