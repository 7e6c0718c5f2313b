"""
Utils package: configuration, concurrency and timing helpers, data I/O, figures
"""
from .config import RunConfig, load_config
from .performance import RunMonitor, monitor, run_concurrently, timed

__all__ = ['RunConfig', 'load_config', 'RunMonitor', 'monitor', 'run_concurrently', 'timed']
