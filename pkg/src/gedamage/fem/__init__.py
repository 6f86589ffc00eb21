"""Finite-element machinery for the coupled displacement/damage problem."""
