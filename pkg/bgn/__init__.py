"""Binarized graph attention engine"""
