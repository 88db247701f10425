"""Wi-Fi / NR-U coexistence simulator with bandit-driven sensing thresholds."""

__version__ = "0.1.0"
