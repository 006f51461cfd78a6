"""Tests for data warehouse project."""

