"""Tests package for the BGN engine"""
