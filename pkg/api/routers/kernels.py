#!/usr/bin/env python3
"""
Kernels Router
Kernel constants and condition reports
"""

from fastapi import APIRouter, Query

from core.kernels import KERNELS, get_kernel, kernel_constants, validate_conditions
from observers.metrics import LatencyTimer

router = APIRouter(prefix="/kernels", tags=["kernels"])


@router.get("")
async def list_kernels():
    return {'kernels': sorted(KERNELS)}


@router.get("/{name}/constants")
async def constants(name: str, d: int = Query(2, ge=1, le=3)):
    """sigma_eta, beta_eta and their ratio, plus the admissibility report"""
    with LatencyTimer('kernel_constants_latency'):
        kernel = get_kernel(name)
        result = kernel_constants(kernel, d).as_dict()
        result['conditions'] = validate_conditions(kernel, d)
        return result
