"""Lexical substitution over sense-clustered decontextualised embeddings."""

__version__ = "0.1.0"
