"""Saturating-integrator control of stable nonlinear SISO plants."""
