from . import fits, simulations

__all__ = ["fits", "simulations"]
