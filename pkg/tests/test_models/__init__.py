"""Tests for models"""

