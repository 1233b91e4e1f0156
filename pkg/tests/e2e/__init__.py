"""End-to-end tests for tfcl.

These tests run complete workflows (generate, fit, eval, recover and the
benchmark) on small synthetic problems. They are marked with the 'e2e'
marker and can be run with: pytest -m e2e
"""
