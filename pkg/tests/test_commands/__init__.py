"""Tests for commands"""
