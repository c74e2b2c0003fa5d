"""Decoupled-residual fault detection and estimation trained by transfer learning."""

__version__ = "0.1.0"
