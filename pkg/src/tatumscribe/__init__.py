"""Tatum-level drum transcription with language-model regularized training."""
__version__ = "0.1.0"

INSTRUMENTS = ("BD", "SD", "HH")
SAMPLE_RATE = 44100
HOP_SECONDS = 0.010
