"""Numerical core: subspace algebra, plant, estimators, controller, harness"""
