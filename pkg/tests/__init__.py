"""Test suite for jointseg."""
