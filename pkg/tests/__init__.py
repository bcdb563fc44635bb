"""Tests package for inhand-pose"""
