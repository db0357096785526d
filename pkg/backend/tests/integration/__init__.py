"""
Integration tests for the kmamba command line.

Drives main(argv) end to end on a small on-disk phantom dataset.
"""
