#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""run_logger.py is the small multi-verbosity logger that persistack uses instead
of the standard library's logging machinery, which is way more than this
program needs. It also keeps track of how long each stage of a pipeline run
takes, so that the run report can say where the time went.

Messages carry a minimum verbosity level; they are printed only when the
module-level VERBOSITY_LEVEL is at least that high. The conventions are:

    0   always shown (errors, final summaries)
    1   stage progress
    2   per-slice and per-level detail
    3+  debugging chatter

This script is copyright 2024 by the persistack authors. It is licensed under
the GNU GPL, either version 3 or (at your option) any later version. See the
file LICENSE.md for details.
"""


import contextlib
import datetime
import platform
import shutil
import sys
import textwrap
import time

from pathlib import Path
from typing import Dict, Iterator, List, TextIO, Union


# Can set the starting level above zero explicitly when debugging.
verbosity_level = 0


def terminal_width(default: int = 80) -> int:
    """Do the best job possible of figuring out the width of the current terminal.
    Fall back on a default width if it cannot be determined.
    """
    try:
        width = shutil.get_terminal_size()[0]
    except Exception:
        width = default
    return width if width > 0 else default


class Logger(object):
    "Encapsulates the destinations a run's messages go to."
    def __init__(self, name: str = "persistack",
                 stream: TextIO = None) -> None:
        self.name = name
        self.stream = stream
        self.logfiles: List[TextIO] = [][:]

    def add_logfile(self, path: Union[str, Path]) -> None:
        """Start copying every emitted message to a log file at PATH. The file gets a
        short header so that a log found lying around later explains itself.
        """
        new_log_file = open(path, mode='wt', buffering=1, encoding='utf-8')
        new_log_file.write(f'This is the beginning of a log file called: "{self.name}".\n')
        new_log_file.write(f'Host: {platform.node()} ({platform.platform()}), Python {platform.python_version()}\n')
        new_log_file.write(f'This log was begun {datetime.datetime.now().strftime("%A, %d %B %Y at %H:%M")}\n\n')
        self.logfiles.append(new_log_file)

    def close_logfiles(self) -> None:
        for f in self.logfiles:
            f.close()
        self.logfiles = [][:]

    def __del__(self):
        if sys is not None:
            self.close_logfiles()

    def log_it(self, message: str,
               minimum_level: int = 1) -> None:
        """Add MESSAGE to the log if the current verbosity_level is at least MINIMUM_LEVEL.
        Lines are wrapped to the terminal; log files get them unwrapped.
        """
        if verbosity_level < minimum_level:
            return
        stream = self.stream or sys.stdout
        width = terminal_width()
        for line in message.split('\n'):
            wrapped = textwrap.wrap(line, width=width - 2, replace_whitespace=False, drop_whitespace=False) or ['']
            print('\n'.join(l.rstrip() for l in wrapped), file=stream)
        for f in self.logfiles:
            print(message, file=f)


the_logger = Logger()


def log_it(message: str,
           minimum_level: int = 1) -> None:
    """Convenience function to wrap the automatically created default Logger object."""
    the_logger.log_it(message, minimum_level)


class StageClock(object):
    """Accumulates wall-clock seconds per named pipeline stage."""
    def __init__(self) -> None:
        self.seconds: Dict[str, float] = dict()

    @contextlib.contextmanager
    def stage(self, name: str) -> Iterator[None]:
        log_it(f"  ... {name}", 1)
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.seconds[name] = self.seconds.get(name, 0.0) + elapsed
            log_it(f"      {name} took {elapsed:.3f} s", 2)

    def total(self) -> float:
        return sum(self.seconds.values())


if __name__ == "__main__":
    verbosity_level = 3
    clock = StageClock()
    with clock.stage("demonstration"):
        log_it("INFO: run_logger is a utility for other modules; it's not a program you can run.", 0)
