"""
Test suite for nonga.
"""
