"""Finite-difference simulation of non-isothermal nematic liquid crystal flow."""
