"""xbarsim: parallel 1D-CNN inference on memristive crossbar tiles.

Subpackages cover the reference network (network), weight/input file
formats (formats), tile placement (mapping), the analog device and
circuit model (crossbar), stuck-device repair (mitigation), the hardware
cost model (costmodel), and evaluation metrics (metrics).
"""

from . import costmodel, crossbar, formats, mapping, metrics, mitigation, network

__all__ = [
    "network",
    "formats",
    "mapping",
    "crossbar",
    "mitigation",
    "costmodel",
    "metrics",
]

__version__ = "0.1.0"
