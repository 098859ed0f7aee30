"""Shuffled-model differential privacy with infinitely divisible discrete noise."""
