"""Wireless-assisted unsupervised person re-identification."""
