"""Benchmark runner: evaluation, design sweeps and the shifting-workload simulation."""
