"""Deterministic SSD power-fault simulator, workload generator and failure analyzer."""

__version__ = "0.1.0"
