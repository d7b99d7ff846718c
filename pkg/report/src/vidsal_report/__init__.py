"""Strictly-downstream figure renderer for the vidsal pipeline outputs.

Reads the documented comparison files (histograms.json, per_sequence.csv)
and explanation directories (record.json, PGM frames, overlay PNGs) and
lays them out as matplotlib figures. It never recomputes a number: every
value it draws appears verbatim in the input files.
"""

__version__ = "0.1.0"
