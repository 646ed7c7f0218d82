"""Annotation and CT slice ingestion."""
