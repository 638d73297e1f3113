"""Counterparty exposure and XVA engine built on a multi-curve G2++ model."""

__version__ = "0.1.0"
