"""Run one candidate script in the current directory and write manifest.json.

The manifest file is the whole interface: callers invoke the harness inside
a fresh working directory, wait for it to exit, and read manifest.json.
Exit code 0 means only "the manifest was written" — candidate failures are
encoded in the manifest's status, never in the harness exit code. The
schema ships in docs/manifest.schema.json.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path

EXCERPT_BYTES = 8192

ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "TMPDIR")

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class HarnessManifest:
    status: str  # ok | nonzero_exit | timeout | missing_output
    output_file: str | None
    output_digest: str | None
    stdout: str
    stderr: str
    wall_time_s: float
    exit_code: int | None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _excerpt(data: bytes | None) -> str:
    if not data:
        return ""
    return data[:EXCERPT_BYTES].decode("utf-8", errors="replace")


def harness_run(
    solution_file: str | Path,
    expected_output: str,
    timeout_s: float,
    workdir: str | Path = ".",
) -> HarnessManifest:
    """Execute the solution with the interpreter; always produce a manifest."""
    work = Path(workdir)
    started = time.monotonic()
    env = {k: os.environ[k] for k in ENV_ALLOWLIST if k in os.environ}
    exit_code: int | None = None
    timed_out = False
    stdout = stderr = b""
    try:
        proc = subprocess.run(
            [sys.executable, str(solution_file)],
            cwd=work,
            env=env,
            capture_output=True,
            timeout=timeout_s,
        )
        exit_code = proc.returncode
        stdout, stderr = proc.stdout, proc.stderr
    except subprocess.TimeoutExpired as exc:
        timed_out = True
        stdout = exc.stdout if isinstance(exc.stdout, bytes) else b""
        stderr = exc.stderr if isinstance(exc.stderr, bytes) else b""
    wall = time.monotonic() - started

    output_path = work / expected_output
    if timed_out:
        status = "timeout"
    elif exit_code != 0:
        status = "nonzero_exit"
    elif not output_path.is_file():
        status = "missing_output"
    else:
        status = "ok"

    digest = None
    if status == "ok":
        digest = hashlib.sha256(output_path.read_bytes()).hexdigest()

    manifest = HarnessManifest(
        status=status,
        output_file=expected_output if status == "ok" else None,
        output_digest=digest,
        stdout=_excerpt(stdout),
        stderr=_excerpt(stderr),
        wall_time_s=wall,
        exit_code=exit_code,
    )
    (work / MANIFEST_NAME).write_text(
        json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 3:
        print(
            "usage: render-harness <solution-file> <expected-output-name> <timeout-seconds>",
            file=sys.stderr,
        )
        return 2
    solution_file, expected_output, raw_timeout = argv
    try:
        timeout_s = float(raw_timeout)
    except ValueError:
        print(f"error: timeout is not a number: {raw_timeout}", file=sys.stderr)
        return 2
    if timeout_s <= 0:
        print("error: timeout must be > 0", file=sys.stderr)
        return 2
    if not Path(solution_file).is_file():
        print(f"error: solution file not found: {solution_file}", file=sys.stderr)
        return 2
    harness_run(solution_file, expected_output, timeout_s)
    return 0


if __name__ == "__main__":
    sys.exit(main())
