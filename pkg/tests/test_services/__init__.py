"""Tests for services"""
