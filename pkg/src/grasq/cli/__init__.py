"""Batch experiment driver: TOML descriptors in, JSON/CSV/SVG reports out."""
