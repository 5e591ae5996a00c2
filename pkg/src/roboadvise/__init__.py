"""Robo-advising pipeline: inverse optimization of investor preferences feeding a
deep-RL multi-period mean-variance allocator, with baselines and a backtest harness."""

__version__ = "0.1.0"
