"""Seedable simulation of X-ray-guided percutaneous pelvic fixation workflows."""

__version__ = "0.1.0"
