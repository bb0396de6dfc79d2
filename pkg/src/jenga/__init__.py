"""Object removal ordering by counterfactual inpainting.

Objects whose region admits many different plausible fills are removed
first; objects whose region keeps getting refilled with the same kind of
thing are holding something up and go last.
"""

__version__ = "0.1.0"
