"""
Seeded desk-scale acceptance runs (slow).
"""
