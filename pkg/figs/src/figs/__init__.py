"""figs: declarative plotting of cavemit run directories.

Pure presentation: reads the columnar populations / intensity files written
by the simulation harness and renders multi-series figures from a small
INI-style figure spec.  No physics is computed here.
"""

__version__ = "0.1.0"
