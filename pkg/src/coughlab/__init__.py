"""Cough-sound screening: audio conditioning, MFCC features, BiLSTM classifier, evaluation."""

__version__ = "0.1.0"
