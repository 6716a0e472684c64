"""Configuration package for the BGN command line"""
