"""Nodal operating envelopes (NOEs) for distributed energy resource aggregations."""

__version__ = "0.1.0"
