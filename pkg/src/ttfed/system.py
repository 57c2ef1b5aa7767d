import logging
import platform

import psutil

log = logging.getLogger(__name__)


class System:
    @staticmethod
    def get_host_info():
        """Static description of the machine a run executed on."""
        try:
            mem = psutil.virtual_memory()
            return {
                "platform": platform.platform(),
                "python": platform.python_version(),
                "cpu_physical": psutil.cpu_count(logical=False) or 0,
                "cpu_logical": psutil.cpu_count(logical=True) or 0,
                "memory_mb": int(mem.total / 1024 / 1024),
            }
        except Exception as e:
            log.warning("could not collect host info: %s", e)
            return {}

    @staticmethod
    def worker_count(requested: int = 0) -> int:
        if requested > 0:
            return requested
        return max(1, psutil.cpu_count(logical=False) or psutil.cpu_count() or 1)
