"""
untrained-prior - early stopping for untrained convolutional generators

A library and command line tool for training two-layer convolutional
generators G(C) = ReLU(UC) v on linear ill-posed problems, stopping them with
the discrepancy principle, and checking the linearization theory behind it
against numerical experiments.
"""

__version__ = "0.1.0"
__author__ = "The untrained-prior Developers"
__description__ = "Discrepancy-principle early stopping for untrained convolutional generators"
