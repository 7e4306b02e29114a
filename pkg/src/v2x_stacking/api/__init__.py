"""MCP tool server for v2x-stacking."""
