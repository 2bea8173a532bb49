"""Efficient biased-basis BB84 simulator and analytics."""
