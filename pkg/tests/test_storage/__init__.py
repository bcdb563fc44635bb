"""Tests for storage"""
