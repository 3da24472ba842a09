"""
Tests package for ronmf.
"""
