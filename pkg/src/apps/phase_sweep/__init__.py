"""Rotating-field geometric phase sweeps for OH (the ohphase command)."""
