"""Request, result and table models."""
