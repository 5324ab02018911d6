"""Command-line interface for the cloudseg package."""
