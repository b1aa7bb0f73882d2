"""Exact finite-field toolkit and protocol simulator for cooperative
erasure repair of Reed-Solomon codes over a subfield tower.

Layers, bottom up:

- ``fieldcore``: arithmetic in GF(p) <= B = GF(p^s) <= F = GF(p^(s*t)),
  the trace map F -> B, and a canonical element enumeration.
- ``sublinalg``: B-linear algebra inside F (kernels, bases, dual bases,
  exact solves).
- ``rscode``: Reed-Solomon encoding, dual-code multipliers, and the
  Lagrange decoder used as the correctness oracle.
- ``repair``: construction of repair plans for one, two, and three
  erasures (per-helper instructions, exchange schedules, recovery
  recipes).
- ``simnet``: synchronous-round execution of plans on simulated nodes
  with full bandwidth accounting.
- ``cli``: command-line front end.
"""

from tracerepair.fieldcore import TowerField, FieldElement, SubElement

__all__ = ["TowerField", "FieldElement", "SubElement"]
__version__ = "0.1.0"
