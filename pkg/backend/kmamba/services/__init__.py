"""
Services: optimization, evaluation and verification workflows.

- optimizer: Adam
- trainer: training loop, checkpoints, per-step CSV
- evaluator: inference and per-case scores
- benchmark: scan vs attention scaling
- ablation: component grid and hyper-parameter sweeps
- gradcheck_suite: finite-difference suites per component
"""
