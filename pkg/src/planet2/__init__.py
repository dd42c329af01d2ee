"""Pocket/ligand graph encoders with dual Gaussian-mixture heads.

Scores protein-ligand affinity from a pocket structure and a ligand graph,
rescores docked poses with a statistical potential, and ships the full
train/prep/eval harness behind the ``planet2`` command line tool.
"""

__version__ = "0.1.0"
