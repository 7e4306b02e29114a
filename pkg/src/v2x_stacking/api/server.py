"""
Tool server entry points for v2x-stacking.

The server exposes the simulation operations (campaign runs, baselines, sweeps,
validation) as MCP tools, over SSE for networked clients or over stdio for local
integration.
"""

from v2x_stacking.config.settings import settings
from v2x_stacking.api.registry import mcp, register_tool

# Import tools to ensure they are registered
import v2x_stacking.api.tools  # noqa: F401
from v2x_stacking.utils import get_logger

logger = get_logger(__name__)


def _log_startup(mode: str) -> None:
    logger.info("=" * 50)
    logger.info(f"v2x-stacking tool server starting ({mode} mode)")
    logger.info("=" * 50)
    logger.info(f"Version: {settings.version}")
    logger.info(f"Output directory: {settings.output_folder}")
    logger.info(f"Log level: {settings.log_level}")


async def run_sse():
    """Run the tool server in SSE (Server-Sent Events) mode.

    The server can be stopped with a keyboard interrupt (Ctrl+C).
    """
    try:
        _log_startup("sse")
        logger.info(f"Server running on http://{settings.server_host}:{settings.server_port}")
        await mcp.run_sse_async()
    except KeyboardInterrupt:
        logger.info("Server stopped by user")
    except Exception as e:
        logger.error(f"Server failed: {e}")
        raise
    finally:
        logger.info("Server shutdown complete")


def run_stdio():
    """Run the tool server over standard input/output."""
    try:
        _log_startup("stdio")
        mcp.run(transport="stdio")
    except KeyboardInterrupt:
        logger.info("Server stopped by user")
    except Exception as e:
        logger.error(f"Server failed: {e}")
        raise
    finally:
        logger.info("Server shutdown complete")


__all__ = ["mcp", "register_tool", "run_sse", "run_stdio"]
