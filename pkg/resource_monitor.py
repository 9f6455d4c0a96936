import logging
import os
import threading
import time
from contextlib import contextmanager
from typing import Dict, Optional

import psutil

from errors import ResourceError

log = logging.getLogger("MONITOR")

GIB = 1 << 30


def default_memory_cap() -> int:
    """Memory cap in bytes from FILTERXL_MEMORY_CAP_GIB (default 4 GiB)."""
    return int(float(os.getenv("FILTERXL_MEMORY_CAP_GIB", "4")) * GIB)


def check_budget(required_bytes: int, cap: Optional[int] = None, what: str = "operation",
                 advice: str = ""):
    """Fail before allocating when an operation would exceed the cap."""
    cap = default_memory_cap() if cap is None else cap
    if required_bytes > cap:
        available = None
        try:
            available = psutil.virtual_memory().available
        except Exception:
            pass
        if not advice:
            advice = "raise --memory-cap or use --streaming"
        if available is not None:
            advice += f" ({available / GIB:.1f} GiB currently available)"
        raise ResourceError(f"{what} exceeds the memory budget", required_bytes=required_bytes,
                            cap_bytes=cap, advice=advice)
    log.debug("%s needs %.1f MiB of %.1f MiB budget", what, required_bytes / 2**20, cap / 2**20)


class ResourceMonitor:
    """Wall time, phase timings and memory figures for one pipeline run."""

    def __init__(self):
        self._lock = threading.Lock()
        self.started = time.time()
        self.phases: Dict[str, float] = {}
        self.system_stats = {
            'rss_bytes': None,
            'peak_rss_bytes': None,
            'available_bytes': None,
            'last_update': None
        }

    def get_rss(self) -> Optional[int]:
        try:
            return psutil.Process().memory_info().rss
        except Exception:
            return None

    def get_available_memory(self) -> Optional[int]:
        try:
            return psutil.virtual_memory().available
        except Exception:
            return None

    def update_system_stats(self):
        rss = self.get_rss()
        available = self.get_available_memory()
        with self._lock:
            peak = self.system_stats['peak_rss_bytes']
            if rss is not None and (peak is None or rss > peak):
                peak = rss
            self.system_stats = {
                'rss_bytes': rss,
                'peak_rss_bytes': peak,
                'available_bytes': available,
                'last_update': time.time()
            }

    @contextmanager
    def phase(self, name: str):
        """Time a named pipeline phase."""
        start = time.time()
        log.info("▶ %s", name)
        try:
            yield
        finally:
            elapsed = time.time() - start
            with self._lock:
                self.phases[name] = self.phases.get(name, 0.0) + elapsed
            self.update_system_stats()
            log.info("✓ %s (%.2fs)", name, elapsed)

    def wall_time(self) -> float:
        return time.time() - self.started

    def get_system_stats(self) -> Dict:
        with self._lock:
            return self.system_stats.copy()

    def get_all_status(self) -> Dict:
        with self._lock:
            phases = dict(self.phases)
        return {
            'wall_time_s': round(self.wall_time(), 3),
            'phases_s': {k: round(v, 3) for k, v in phases.items()},
            'system_stats': self.get_system_stats()
        }
