"""Numerical verification of a solenoidal counterexample field whose
shear-dependent weight ``(1 + |Du|)^(p-2)`` leaves every Muckenhoupt class."""

__version__ = "0.1.0"
