"""Host description recorded with every training run.

Training is pinned to the CPU for bit-reproducible weights, so the CPU model
and the intra-op thread count matter when comparing run times and results.
"""

import os
import platform

import lightning
import torch


def cpu_name() -> str:
    try:
        with open('/proc/cpuinfo', 'r') as f:
            for line in f:
                if line.startswith('model name'):
                    return line.split(':', 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or 'unknown'


def gpu_name() -> str:
    if torch.cuda.is_available():
        return torch.cuda.get_device_name(torch.cuda.current_device())
    return 'none'


def runtime_info() -> dict:
    """Hardware and library versions as flat, logger-friendly fields."""
    return {
        'cpu': cpu_name().replace(' ', '_'),
        'gpu': gpu_name().replace(' ', '_'),
        'num_threads': torch.get_num_threads(),
        'num_cpu_cores': os.cpu_count(),
        'torch_version': str(torch.__version__),
        'lightning_version': lightning.__version__,
    }
