"""HTTP routers for pricing and series analysis."""
