"""CLI tool for PtychoMix."""
