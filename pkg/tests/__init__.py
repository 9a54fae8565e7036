"""
Tests for jbdlab
"""
