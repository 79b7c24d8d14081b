"""Quantum graph convolutional network on a classical statevector simulator."""

from . import decompose, graphdata, lcu, model, nsga2, statevector, train

__all__ = ["statevector", "graphdata", "decompose", "lcu", "nsga2", "model",
           "train"]

__version__ = "0.1.0"
