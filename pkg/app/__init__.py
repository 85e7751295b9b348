"""SABR Series Lab."""
