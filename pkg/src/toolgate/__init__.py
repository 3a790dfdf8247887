"""Dynamic tool-set reduction for LLM function calling."""
