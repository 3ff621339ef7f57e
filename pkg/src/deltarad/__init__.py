"""Delta-radiomics on serial MR: extraction, stability gating, deltas and survival."""

__version__ = "0.1.0"
