"""
Core layer - configuration, exceptions, domain entities and port interfaces.

This layer is independent of the tensor engine and of file formats.
"""
