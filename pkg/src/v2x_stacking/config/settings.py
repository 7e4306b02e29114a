"""
Settings management for v2x-stacking.

This module loads runtime configuration (output and log folders, logging levels,
solver tolerances and tool-server options) from the environment and an optional
.env file. Experiment descriptions live in scenario YAML files instead, see
v2x_stacking.core.scenario.
"""

import os
from pathlib import Path
from functools import lru_cache
from dotenv import load_dotenv
from pydantic_settings import BaseSettings
from pydantic import field_validator


# Load environment variables from .env (base)
load_dotenv('.env')

class AppSettings(BaseSettings):
    """Settings for v2x-stacking.

    Every field can be overridden by an environment variable with the V2X_ prefix.
    Settings are validated using pydantic.
    """

    # Output and log directories
    output_folder: str = os.getenv("V2X_OUTPUT_FOLDER", "results")
    log_folder: str = os.getenv("V2X_LOG_FOLDER", "logs")

    # Logging configuration
    log_level: str = os.getenv("V2X_LOG_LEVEL", "INFO")
    file_log_level: str = os.getenv("V2X_FILE_LOG_LEVEL", "DEBUG")

    # QP subsolver
    solver_eps_abs: float = float(os.getenv("V2X_SOLVER_EPS_ABS", "1e-6"))
    solver_eps_rel: float = float(os.getenv("V2X_SOLVER_EPS_REL", "1e-6"))
    solver_max_iter: int = int(os.getenv("V2X_SOLVER_MAX_ITER", "10000"))
    solver_rho: float = float(os.getenv("V2X_SOLVER_RHO", "0.1"))
    solver_sigma: float = float(os.getenv("V2X_SOLVER_SIGMA", "1e-6"))
    solver_alpha: float = float(os.getenv("V2X_SOLVER_ALPHA", "1.6"))
    solver_polish: bool = os.getenv("V2X_SOLVER_POLISH", "true").lower() == "true"

    # Integer handling
    pair_tolerance: float = float(os.getenv("V2X_PAIR_TOLERANCE", "1e-6"))
    repair_max_passes: int = int(os.getenv("V2X_REPAIR_MAX_PASSES", "10"))
    branch_max_nodes: int = int(os.getenv("V2X_BRANCH_MAX_NODES", "5000"))
    branch_pair_limit: int = int(os.getenv("V2X_BRANCH_PAIR_LIMIT", "12"))
    soft_departure_penalty: float = float(os.getenv("V2X_SOFT_DEPARTURE_PENALTY", "10.0"))

    # Run defaults
    jobs: int = int(os.getenv("V2X_JOBS", "1"))
    default_mode: str = os.getenv("V2X_DEFAULT_MODE", "repair")

    # Tool server configuration
    server_host: str = os.getenv("V2X_SERVER_HOST", "localhost")
    server_port: int = int(os.getenv("V2X_SERVER_PORT", "8000"))
    tool_prefix: str = os.getenv("V2X_SERVER_TOOL_PREFIX", "V2X_")
    version: str = os.getenv("V2X_VERSION", "0.1.0")

    @field_validator("log_level", "file_log_level")
    def validate_log_level(cls, v: str) -> str:
        """Validate logging level."""
        allowed_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
        if v.upper() not in allowed_levels:
            raise ValueError(f"Log level must be one of: {', '.join(allowed_levels)}")
        return v.upper()

    @field_validator("server_port")
    def validate_port(cls, v: int) -> int:
        """Validate server port number."""
        if not 1 <= v <= 65535:
            raise ValueError("Port must be between 1 and 65535")
        return v

    @field_validator("default_mode")
    def validate_mode(cls, v: str) -> str:
        """Validate the default integer-handling mode."""
        if v not in {"repair", "branch"}:
            raise ValueError("Mode must be 'repair' or 'branch'")
        return v

    @field_validator("solver_eps_abs", "solver_eps_rel", "solver_rho", "solver_sigma", "pair_tolerance")
    def validate_positive(cls, v: float) -> float:
        """Solver tolerances and step sizes must be positive."""
        if v <= 0:
            raise ValueError("Value must be positive")
        return v

    @field_validator("output_folder", "log_folder")
    def validate_paths(cls, v: str) -> str:
        """Validate and create directory for paths if needed."""
        Path(v).mkdir(parents=True, exist_ok=True)
        return v

@lru_cache()
def get_settings() -> AppSettings:
    """Get cached settings instance"""
    return AppSettings()

# Create a global settings instance
settings = get_settings()
