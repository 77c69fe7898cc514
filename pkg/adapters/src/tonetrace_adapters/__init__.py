"""Pretrained-model adapters: file-boundary bridges into the tonetrace harness.

Nothing here imports the main package; the contract is solely the files the
harness ingests (WAV directories, labels CSV, metrics CSV, provenance JSON).
"""

from .jobs import AdapterJob, InferenceError, ModelUnavailable
from .runner import run_adapter

__version__ = "0.1.0"
