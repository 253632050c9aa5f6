"""Tests for dinosaur_readout."""
