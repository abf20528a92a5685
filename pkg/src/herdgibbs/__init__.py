"""Deterministic sampling from Gaussian mixtures by kernel herding and continuous herded Gibbs."""
