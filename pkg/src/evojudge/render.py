"""Rendering: the map from solutions to evaluatable artifacts.

Identity rendering returns the solution text unchanged. Command rendering
writes the solution to a file inside a fresh working directory, runs a
configured command there with a timeout and an allowlisted environment, and
collects the declared output file. If the command leaves a ``manifest.json``
behind (the runner-harness contract), the manifest alone decides the
outcome; otherwise the exit code and output file do. All failures come back
as :class:`RenderFailure` values so the engine can eliminate the individual
instead of crashing the run.
"""

from __future__ import annotations

import json
import os
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

from evojudge.core import Artifact, InvalidInputError, Solution, sha256_hex

EXCERPT_BYTES = 8192

FailureReason = Literal["nonzero_exit", "timeout", "missing_output", "harness_error"]

_DEFAULT_ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "PYTHONPATH", "VIRTUAL_ENV")

_SOLUTION_FILENAMES = {"python": "solution.py", "text": "solution.txt"}


@dataclass(frozen=True, slots=True)
class RendererConfig:
    kind: Literal["identity", "command"] = "identity"
    command_template: str | None = None
    output_name: str | None = None
    timeout_s: float = 60.0
    env_allowlist: tuple[str, ...] = _DEFAULT_ENV_ALLOWLIST

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise InvalidInputError("render timeout must be > 0")
        if self.kind == "command":
            if not self.command_template:
                raise InvalidInputError("command rendering requires a command template")
            if not self.output_name:
                raise InvalidInputError("command rendering requires a declared output name")
        elif self.kind != "identity":
            raise InvalidInputError(f"unknown renderer kind {self.kind!r}")


@dataclass(frozen=True, slots=True)
class RenderFailure:
    reason: FailureReason
    stdout_excerpt: str = ""
    stderr_excerpt: str = ""
    detail: str = ""


def _excerpt(data: bytes | str | None) -> str:
    if data is None:
        return ""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    return data[:EXCERPT_BYTES]


def _substitute(template: str, values: dict[str, str]) -> str:
    # Only the known placeholders are substituted; values are shell-quoted.
    def repl(match: re.Match) -> str:
        name = match.group(1)
        if name in values:
            return shlex.quote(values[name])
        return match.group(0)

    return re.sub(r"\{(\w+)\}", repl, template)


def render(
    solution: Solution,
    cfg: RendererConfig,
    workdir: str | Path | None = None,
    environ: dict[str, str] | None = None,
) -> Artifact | RenderFailure:
    """Render one solution. Never raises for candidate-side failures."""
    if cfg.kind == "identity":
        return Artifact.from_text(solution.content)
    return _render_command(solution, cfg, workdir, environ)


def _render_command(
    solution: Solution,
    cfg: RendererConfig,
    workdir: str | Path | None,
    environ: dict[str, str] | None,
) -> Artifact | RenderFailure:
    work = Path(workdir) if workdir is not None else Path(tempfile.mkdtemp(prefix="render-"))
    work.mkdir(parents=True, exist_ok=True)

    filename = _SOLUTION_FILENAMES.get(solution.content_kind, "solution.txt")
    solution_file = work / filename
    solution_file.write_text(solution.content, encoding="utf-8")

    source_env = environ if environ is not None else dict(os.environ)
    env = {k: source_env[k] for k in cfg.env_allowlist if k in source_env}

    command = _substitute(
        cfg.command_template or "",
        {"solution_file": str(solution_file), "out_dir": str(work)},
    )
    try:
        argv = shlex.split(command)
    except ValueError as exc:
        return RenderFailure(reason="harness_error", detail=f"bad command template: {exc}")
    if not argv:
        return RenderFailure(reason="harness_error", detail="empty render command")

    try:
        proc = subprocess.run(
            argv,
            cwd=work,
            env=env,
            capture_output=True,
            timeout=cfg.timeout_s,
        )
    except subprocess.TimeoutExpired as exc:
        manifest = _load_manifest(work)
        if manifest is not None:
            return _from_manifest(manifest, work)
        return RenderFailure(
            reason="timeout",
            stdout_excerpt=_excerpt(exc.stdout),
            stderr_excerpt=_excerpt(exc.stderr),
            detail=f"timed out after {cfg.timeout_s}s",
        )
    except OSError as exc:
        return RenderFailure(reason="harness_error", detail=f"could not launch renderer: {exc}")

    stdout = _excerpt(proc.stdout)
    stderr = _excerpt(proc.stderr)

    manifest = _load_manifest(work)
    if manifest is not None:
        return _from_manifest(manifest, work)

    if proc.returncode != 0:
        return RenderFailure(
            reason="nonzero_exit",
            stdout_excerpt=stdout,
            stderr_excerpt=stderr,
            detail=f"exit code {proc.returncode}",
        )
    output = work / (cfg.output_name or "")
    if not output.is_file():
        return RenderFailure(
            reason="missing_output",
            stdout_excerpt=stdout,
            stderr_excerpt=stderr,
            detail=f"declared output {cfg.output_name!r} was not produced",
        )
    return Artifact.from_file(output)


def _load_manifest(work: Path) -> dict | None:
    path = work / "manifest.json"
    if not path.is_file():
        return None
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return {"status": "__unreadable__"}
    return data if isinstance(data, dict) else {"status": "__unreadable__"}


def _from_manifest(manifest: dict, work: Path) -> Artifact | RenderFailure:
    status = manifest.get("status")
    stdout = _excerpt(manifest.get("stdout", ""))
    stderr = _excerpt(manifest.get("stderr", ""))
    if status == "ok":
        rel = manifest.get("output_file")
        if not rel:
            return RenderFailure(reason="harness_error", detail="manifest ok without output_file")
        output = work / rel
        if not output.is_file():
            return RenderFailure(reason="harness_error", detail=f"manifest names missing file {rel!r}")
        artifact = Artifact.from_file(output)
        declared = manifest.get("output_digest")
        if declared and declared != artifact.digest:
            return RenderFailure(
                reason="harness_error",
                detail=f"manifest digest {str(declared)[:12]}.. != file digest {str(artifact.digest)[:12]}..",
            )
        return artifact
    if status in ("nonzero_exit", "timeout", "missing_output"):
        return RenderFailure(reason=status, stdout_excerpt=stdout, stderr_excerpt=stderr, detail="reported by harness manifest")
    return RenderFailure(reason="harness_error", detail=f"manifest status {status!r}")


def digest(artifact: Artifact) -> str:
    """SHA-256 hex of the artifact body (text bytes or file bytes)."""
    if artifact.kind == "text":
        return sha256_hex((artifact.text or "").encode("utf-8"))
    path = Path(artifact.path or "")
    try:
        return sha256_hex(path.read_bytes())
    except OSError as exc:
        raise InvalidInputError(f"cannot read artifact file {artifact.path}: {exc}")
