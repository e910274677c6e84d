"""Medical specialty classification from clinical free text.

A from-scratch embedding + MLP classifier over either the keyword field
or the full transcription of a clinical record, with stratified k-fold
evaluation, deterministic artifacts, and a small CLI / HTTP front end.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
