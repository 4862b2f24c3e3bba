"""Classical walking of a single atom in an amplitude-modulated standing-wave lattice."""

__version__ = "0.1.0"
