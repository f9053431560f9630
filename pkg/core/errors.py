#!/usr/bin/env python3
"""
Error Hierarchy
Exceptions raised by the laboratory and the exit codes they map to
"""

from typing import Dict, List, Optional


class SpecLabError(Exception):
    """Base class for every laboratory error"""
    exit_code = 1
    http_status = 500


class InvalidArgumentError(SpecLabError, ValueError):
    exit_code = 2
    http_status = 400


class ConfigurationError(SpecLabError):
    exit_code = 2
    http_status = 400


class KernelConditionError(SpecLabError):
    """Kernel fails an admissibility condition in a way that makes a constant undefined"""
    exit_code = 2
    http_status = 422


class ResourceError(SpecLabError):
    exit_code = 3
    http_status = 503


class SolverError(SpecLabError):
    """Iterative solver failed; carries the best residuals it reached"""
    exit_code = 3
    http_status = 500

    def __init__(self, message: str, residuals: Optional[List[float]] = None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class InternalInvariantError(SpecLabError):
    exit_code = 3
    http_status = 500


def error_payload(error: Exception) -> Dict:
    """Serializable description of an error for reports and HTTP responses"""
    payload = {
        'error': type(error).__name__,
        'message': str(error),
        'exit_code': getattr(error, 'exit_code', 1)
    }
    if isinstance(error, SolverError) and error.residuals:
        payload['residuals'] = error.residuals
    return payload
