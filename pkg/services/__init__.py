"""Pose estimation services: geometry, hand, registration, selection, rendering and evaluation"""
