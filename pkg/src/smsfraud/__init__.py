"""Fraudulent SMS detection: corpus handling, TF-IDF features, four classic
classifiers, grid-search tuning, evaluation reports and an experiment CLI."""

__version__ = "0.1.0"
