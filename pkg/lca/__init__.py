"""Language-centric agent training harness."""
