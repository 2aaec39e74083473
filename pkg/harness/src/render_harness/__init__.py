"""Sandboxed runner: execute a candidate script, report through manifest.json."""

from render_harness.runner import HarnessManifest, harness_run, main

__all__ = ["HarnessManifest", "harness_run", "main"]
