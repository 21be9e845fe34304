"""Simulated sensor sources and the wire formats they share with real ingestion."""
