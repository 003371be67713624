"""Desk-scale laboratory for manifold-lifted time-series forecasting.

Subpackages: `linalg`/`rng` numeric core, `grad`/`layers` hand-derived
autodiff, `theory` expected-cosine verifier, `data` ingestion and windowing,
`model` the forecasting network, `diagnostics` cone/PCA instruments, `train`
the loop, `cli` the command-line front end, `weights`/`config` file formats.
"""

__version__ = "0.1.0"
