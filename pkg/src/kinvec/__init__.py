"""Phase-space lab for commuting vector fields of free and Vlasov-Poisson transport."""

__version__ = "0.1.0"
