"""Recursive subspace predictive control of a synthetic Windsor-body wake"""

from . import operators, panels, properties

__version__ = "0.1.0"


def register():
    operators.register()
    panels.register()


def unregister():
    panels.unregister()
    operators.unregister()


__all__ = ["operators", "panels", "properties", "register", "unregister"]
