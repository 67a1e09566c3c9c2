"""Explaining single-score scene classifiers with activation-maximizing cycle GANs."""
