"""Periodic waves of the dissipative KdV equation and their modulational stability.

Modules:

* ``special``, ``cnoidal``: elliptic functions and the KdV cnoidal family
* ``profile``: dissipative wave profiles by Newton and continuation
* ``operators``: linearized operators and bordered solves
* ``whitham``: first- and second-order modulation systems
* ``bloch``: Bloch spectra and their low-frequency expansions
* ``direct_sim``: time stepping for the full equation
"""

__version__ = "0.1.0"
