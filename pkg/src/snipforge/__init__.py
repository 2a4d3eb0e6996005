"""snipforge - mine method-level snippets from git history and forge LLM evaluation testbeds."""

__version__ = "0.1.0"
