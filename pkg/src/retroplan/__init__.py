"""Retrosynthesis route planning over a literature-derived reaction knowledge graph.

The package is organised around a pipeline:

1. :mod:`retroplan.extraction` turns literature documents into reaction
   records.
2. :mod:`retroplan.kgraph` stores those records in a chemical knowledge
   graph keyed by compound name.
3. :mod:`retroplan.availability` answers "can I buy / already make this
   compound?" with caching and pluggable backends.
4. :mod:`retroplan.retrotree` grows a retrosynthesis tree for a target
   compound, optionally widening the graph with further literature
   retrieval when it hits dead ends.
5. :mod:`retroplan.pathways` enumerates the complete reaction pathways
   encoded by a tree.
6. :mod:`retroplan.ranking` screens, scores and recommends pathways.
7. :mod:`retroplan.cli` wires the stages into a command line tool.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
