"""Least-squares gradient/Hessian-recovery finite elements for elliptic
PDEs in nondivergence form, with uniform and adaptive refinement."""

__version__ = "0.1.0"
