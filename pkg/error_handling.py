#!/usr/bin/env python3
"""
Error Handling Framework for EventKernel
Provides custom exceptions, operation tracking and crash reporting.
"""

import logging
import traceback
import time
import os
import sys
from datetime import datetime
from typing import Optional, Any, Dict
from pathlib import Path


# ==================== CUSTOM EXCEPTIONS ====================

class EventKernelError(Exception):
    """Base exception for all EventKernel errors."""

    def __init__(self, message: str, suggestion: Optional[str] = None, original_error: Optional[Exception] = None):
        self.message = message
        self.suggestion = suggestion
        self.original_error = original_error
        super().__init__(self.format_message())

    def format_message(self) -> str:
        """Format error message with suggestion."""
        msg = self.message
        if self.suggestion:
            msg += f"\n\nSuggestion: {self.suggestion}"
        if self.original_error:
            msg += f"\n\nOriginal error: {str(self.original_error)}"
        return msg

    def __reduce__(self):
        # subclasses take different constructor arguments; rebuild from state
        return (_rebuild_error, (self.__class__, self.__dict__.copy()))


def _rebuild_error(cls, state):
    error = cls.__new__(cls)
    error.__dict__.update(state)
    Exception.__init__(error, error.format_message())
    return error


class StructuralError(EventKernelError):
    """Raised when a computation tape is used inconsistently."""


class ContractViolation(EventKernelError):
    """Raised when an operation is called outside its preconditions."""


class DivergenceError(EventKernelError):
    """Raised when a loss or gradient stops being finite."""

    def __init__(self, what: str, original_error: Optional[Exception] = None):
        message = f"Non-finite {what} encountered"
        suggestion = (
            "Try:\n"
            "  1. Lowering the learning rate\n"
            "  2. Increasing the number of stratification segments\n"
            "  3. Resuming from the last good checkpoint"
        )
        super().__init__(message, suggestion, original_error)


class BoundViolationError(EventKernelError):
    """Raised when a thinning proposal exceeds the dominating bound."""

    def __init__(self, t: float, intensity: float, bound: float):
        message = f"Total intensity {intensity:.6g} exceeds dominating bound {bound:.6g} at t={t:.6g}"
        suggestion = "Check the process upper_bound() against its intensity over the lookahead window"
        super().__init__(message, suggestion)


class DatasetError(EventKernelError):
    """Raised when a dataset, manifest or checkpoint cannot be read."""

    def __init__(self, path: str = "", detail: str = "", original_error: Optional[Exception] = None):
        message = f"Invalid data{': ' + path if path else ''}{' (' + detail + ')' if detail else ''}"
        suggestion = (
            "Check that:\n"
            "  1. The file was produced by `simulate` or `train`\n"
            "  2. Every line is a JSON object with \"T\" and \"events\"\n"
            "  3. Event times are sorted and lie inside [0, T)"
        )
        super().__init__(message, suggestion, original_error)


class ConfigError(EventKernelError):
    """Raised when a configuration value is missing or out of range."""


class LikelihoodError(EventKernelError):
    """Raised when the likelihood of one sequence in a batch fails."""

    def __init__(self, index: int, original_error: Exception):
        super().__init__(f"Likelihood failed for sequence {index}", original_error=original_error)
        self.index = index


class PredictionError(EventKernelError):
    """Raised when prediction meets a non-finite intensity."""


# ==================== CRASH LOG SYSTEM ====================

class CrashReporter:
    """Handles crash reporting and error logging."""

    def __init__(self, crash_log_dir: str = "logs/crashes"):
        self.crash_log_dir = Path(crash_log_dir)

    def report_crash(self, error: Exception, context: Dict[str, Any] = None):
        """
        Report a crash with full traceback and context.

        Args:
            error: The exception that caused the crash
            context: Additional context information (e.g. command, parameters)
        """
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")

        try:
            self.crash_log_dir.mkdir(parents=True, exist_ok=True)
            crash_file = self.crash_log_dir / f"crash_{timestamp}.log"
            with open(crash_file, 'w', encoding='utf-8') as f:
                f.write("=" * 80 + "\n")
                f.write("EVENTKERNEL CRASH REPORT\n")
                f.write(f"Timestamp: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
                f.write("=" * 80 + "\n\n")

                f.write(f"Error Type: {type(error).__name__}\n")
                f.write(f"Error Message: {str(error)}\n\n")

                if context:
                    f.write("Context Information:\n")
                    for key, value in context.items():
                        f.write(f"  {key}: {value}\n")
                    f.write("\n")

                f.write("Full Traceback:\n")
                f.write("-" * 80 + "\n")
                f.write("".join(traceback.format_exception(type(error), error, error.__traceback__)))
                f.write("-" * 80 + "\n\n")

                f.write("System Information:\n")
                f.write(f"  Python Version: {sys.version}\n")
                f.write(f"  Platform: {sys.platform}\n")
                f.write(f"  Working Directory: {os.getcwd()}\n")

            logging.error(f"Crash report saved to: {crash_file}")
            return str(crash_file)

        except Exception as report_error:
            logging.error(f"Failed to write crash report: {report_error}")
            return None


# ==================== CONTEXT MANAGER FOR ERROR TRACKING ====================

class ErrorContext:
    """Context manager for tracking errors with additional context."""

    def __init__(self, operation: str, crash_reporter: Optional[CrashReporter] = None,
                 expected: tuple = (EventKernelError,)):
        self.operation = operation
        self.crash_reporter = crash_reporter
        self.expected = expected
        self.start_time = None
        self.duration = 0.0

    def __enter__(self):
        self.start_time = time.time()
        logging.debug(f"Starting: {self.operation}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = time.time() - self.start_time

        if exc_type is None:
            logging.debug(f"Completed: {self.operation} ({self.duration:.2f}s)")
            return False

        logging.error(f"Failed: {self.operation} after {self.duration:.2f}s - {exc_val}")

        # Expected failures carry their own diagnostics; only unexpected ones get a crash file
        if self.crash_reporter and not isinstance(exc_val, self.expected):
            context = {
                "operation": self.operation,
                "duration_seconds": self.duration,
                "error_type": exc_type.__name__
            }
            self.crash_reporter.report_crash(exc_val, context)

        return False  # Re-raise exception


# ==================== GLOBAL CRASH REPORTER INSTANCE ====================

_global_crash_reporter = CrashReporter()


def get_crash_reporter() -> CrashReporter:
    """Get the global crash reporter instance."""
    return _global_crash_reporter
