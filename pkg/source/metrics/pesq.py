"""Adapter for an external PESQ executable.

PESQ itself is not implemented here. The tool is described by a command
template such as

    pesq +16000 {mode_flag} {clean} {degraded}

in which `{clean}`, `{degraded}` and optionally `{mode}` (`wb` / `nb`)
or `{mode_flag}` (`+wb` / empty) are substituted. The tool must print
the score as the last number on its last non-empty output line.
"""

import re
import shlex
import subprocess
from typing import Optional

from source.utils.errors import ToolFailed, ToolNotConfigured

PESQ_MIN, PESQ_MAX = -0.5, 4.5
TIMEOUT_SECONDS = 120

_number = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")


def parse_score(output: str) -> float:
    """Last number on the last non-empty line of `output`."""

    lines = [line for line in output.splitlines() if line.strip()]
    numbers = _number.findall(lines[-1]) if lines else []
    if not numbers:
        raise ToolFailed(f"PESQ output has no score: {output.strip()[-200:]!r}")

    score = float(numbers[-1])
    if not PESQ_MIN <= score <= PESQ_MAX:
        raise ToolFailed(f"PESQ score {score} lies outside [{PESQ_MIN}, {PESQ_MAX}].")

    return score


def build_command(tool_command: str, clean_path: str, processed_path: str, mode: str = 'wb') -> list[str]:
    fields = {
        'clean': clean_path,
        'degraded': processed_path,
        'mode': mode,
        'mode_flag': '+wb' if mode == 'wb' else '',
    }
    try:
        args = [arg.format(**fields) for arg in shlex.split(tool_command)]
    except (KeyError, IndexError, ValueError) as error:
        raise ToolNotConfigured(f"PESQ command template '{tool_command}' is invalid: {error}") from error

    return [arg for arg in args if arg]


def pesq_external(clean_path: str, processed_path: str, tool_command: Optional[str], mode: str = 'wb') -> float:
    """PESQ score of `processed_path` against `clean_path` (16 kHz WAVs).

    Raises:
        ToolNotConfigured if no tool command is set.
        ToolFailed if the tool cannot run, exits nonzero or prints no score.
    """

    if not tool_command:
        raise ToolNotConfigured("No PESQ tool configured (set pesq_command or AVSE_PESQ_CMD).")

    command = build_command(tool_command, clean_path, processed_path, mode)
    try:
        result = subprocess.run(command, capture_output=True, text=True, timeout=TIMEOUT_SECONDS, check=False)
    except (OSError, subprocess.TimeoutExpired) as error:
        raise ToolFailed(f"PESQ tool '{command[0]}' could not run: {error}") from error

    if result.returncode != 0:
        raise ToolFailed(f"PESQ tool '{command[0]}' exited with {result.returncode}: {result.stderr.strip()[-200:]}")

    return parse_score(result.stdout)
