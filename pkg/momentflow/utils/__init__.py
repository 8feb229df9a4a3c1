"""Utility modules for momentflow"""
