"""
Provides a decorator and context manager for monitoring
command execution time, resource usage, and status.

The summary ends up in the log and in the command's run manifest.
"""

import datetime
import logging
import threading
import time
import traceback
from functools import wraps
from types import TracebackType
from typing import Any, Callable, Literal, Optional, ParamSpec, TypeVar

import psutil
from typing_extensions import Self

from .config import settings

P = ParamSpec("P")
R = TypeVar("R")

logger = logging.getLogger(__name__)


class MonitorScript:
    """
    A context manager to monitor the execution time,
    resource usage (CPU, memory), and status of a block of code.
    """

    def __init__(self, main_function_name: str, interval: Optional[float] = None):
        self.main_function_name = main_function_name
        self.interval = (
            interval if interval is not None else settings.RUNTIME.MONITOR_INTERVAL_SEC
        )
        self.start_time: float = 0.0
        self.end_time: float = 0.0
        self.execution_datetime: Optional[datetime.datetime] = None
        self.cpu_samples: list[float] = []
        self.mem_samples: list[float] = []
        self.status: str = "Success"
        self.error_message: Optional[str] = None
        self._stop = threading.Event()
        self._sampling_thread: Optional[threading.Thread] = None
        self._process = psutil.Process()

    def __enter__(self) -> Self:
        """Starts the monitoring process."""
        self.start_time = time.time()
        self.execution_datetime = datetime.datetime.now()
        self._stop.clear()
        self._sampling_thread = threading.Thread(
            target=self._sample_resources, daemon=True
        )
        self._sampling_thread.start()
        logger.debug(f"Monitoring started for '{self.main_function_name}'")
        return self

    def _sample_resources(self) -> None:
        """Internal method run by the background thread to sample resources."""
        while not self._stop.is_set():
            try:
                self.cpu_samples.append(self._process.cpu_percent(interval=None))
                # Resident Set Size (RSS) in Megabytes (MB)
                self.mem_samples.append(self._process.memory_info().rss / (1024 * 1024))
            except (psutil.NoSuchProcess, psutil.AccessDenied):
                break
            self._stop.wait(self.interval)

    def __exit__(
        self,
        exc_type: Optional[type[BaseException]],
        exc_value: Optional[BaseException],
        exc_traceback: Optional[TracebackType],
    ) -> Literal[False]:
        """Stops the monitoring process."""
        self._stop.set()
        self.end_time = time.time()

        if self._sampling_thread:
            self._sampling_thread.join()

        if exc_type:
            self.status = "Fail"
            self.error_message = "".join(
                traceback.format_exception(exc_type, exc_value, exc_traceback)
            )
            logger.debug(
                f"Monitoring recorded FAILED execution for '{self.main_function_name}'"
            )
        else:
            logger.debug(
                f"Monitoring recorded SUCCESSFUL execution for "
                f"'{self.main_function_name}'"
            )

        # Propagate exceptions (if any)
        return False

    def get_summary(self) -> dict[str, Any]:
        """Calculates monitoring statistics."""
        if not self.cpu_samples:
            avg_cpu = peak_cpu = 0.0
        else:
            # First sample is often 0.0, so we average non-zero
            valid_cpu = [s for s in self.cpu_samples if s > 0.0]
            avg_cpu = sum(valid_cpu) / len(valid_cpu) if valid_cpu else 0.0
            peak_cpu = max(self.cpu_samples)

        if not self.mem_samples:
            avg_mem = peak_mem = 0.0
        else:
            avg_mem = sum(self.mem_samples) / len(self.mem_samples)
            peak_mem = max(self.mem_samples)

        duration = self.end_time - self.start_time
        exec_dt = self.execution_datetime or datetime.datetime.now()

        return {
            "execution_datetime": exec_dt.strftime("%Y-%m-%d %H:%M:%S"),
            "main_function": self.main_function_name,
            "status": self.status,
            "error_message": self.error_message or "",
            "execution_time_sec": round(duration, 2),
            "avg_cpu_percentage": round(avg_cpu, 2),
            "peak_cpu_percentage": round(peak_cpu, 2),
            "avg_mem_mb": round(avg_mem, 2),
            "peak_mem_mb": round(peak_mem, 2),
        }


def monitor_command(
    main_function_name: str,
    on_summary: Optional[Callable[[dict[str, Any]], None]] = None,
) -> Callable[[Callable[P, R]], Callable[P, R]]:
    """
    A decorator factory for monitoring a command's execution.

    The wrapped function runs inside `MonitorScript`; afterwards (success or
    failure) the resource summary is logged and handed to `on_summary`.

    Args:
        main_function_name: The name to log for this monitored function.
        on_summary: Optional callback receiving the summary dict.

    Returns:
        A decorator.
    """

    def decorator(func: Callable[P, R]) -> Callable[P, R]:
        @wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
            monitor: Optional[MonitorScript] = None
            try:
                with MonitorScript(main_function_name=main_function_name) as m:
                    monitor = m
                    return func(*args, **kwargs)
            finally:
                if monitor:
                    summary = monitor.get_summary()
                    logger.info(
                        f"'{main_function_name}' finished with status "
                        f"{summary['status']} in {summary['execution_time_sec']} s "
                        f"(peak memory {summary['peak_mem_mb']} MB)"
                    )
                    if on_summary is not None:
                        on_summary(summary)

        return wrapper

    return decorator
