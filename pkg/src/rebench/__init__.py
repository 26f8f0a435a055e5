"""Holdout RE skill and pseudoproxy null benchmarks for proxy reconstructions."""
__version__ = "0.1.0"
