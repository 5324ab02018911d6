"""Test suite for the cloudseg package."""
