"""Runnable instrumented demo workloads for the roofline pipeline."""
