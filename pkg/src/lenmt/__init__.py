"""Desk-scale transformer machine translation with output-length control.

Provides length-ratio token conditioning, absolute/relative decoder length
encodings, length-controlled beam decoding, and a length-aware evaluation
suite (BLEU, BLEU*, LR metrics), exercised on synthetic controllable-length
corpora.
"""

__version__ = "0.1.0"
