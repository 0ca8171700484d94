"""Model-reduction laboratory: conditional-expectation averaging, Mori-Zwanzig
memory approximations, effective-equation fitting and lattice decimation."""

__version__ = "0.1.0"
