"""Multi-agent LLM trading pipeline with deterministic backtesting."""

__version__ = "0.1.0"
