"""Problem files for the solver tests."""
