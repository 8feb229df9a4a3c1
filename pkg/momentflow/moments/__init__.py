"""Moment propagation primitives: special functions, activation statistics, linear layers"""
