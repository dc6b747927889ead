"""Federated PC causal structure learning."""
