"""
Tool registration module for v2x-stacking.
This module provides the tool registration functionality used by the server.
All registered tool names are prefixed with the configured tool prefix.
"""

from typing import Callable

from mcp.server.fastmcp import FastMCP

from v2x_stacking.config.settings import settings

# Prefix for all tool names
TOOL_PREFIX = settings.tool_prefix

mcp = FastMCP(
    name="v2x-stacking",
    instructions="Run EV value-stacking simulations: campaigns, baselines and forecast-error sweeps",
    port=settings.server_port,
    host=settings.server_host,
    dependencies=[
        "numpy>=2.0.0",
        "scipy>=1.13.0",
        "pandas>=2.0.0",
        "openpyxl>=3.1.2",
    ],
)


def register_tool(func: Callable) -> Callable:
    """Register a function as an MCP tool named with the configured prefix.

    Args:
        func: The function to register as a tool

    Returns:
        The decorated function
    """
    tool_name = TOOL_PREFIX + func.__name__
    return mcp.tool(name=tool_name)(func)


__all__ = ["mcp", "register_tool"]
