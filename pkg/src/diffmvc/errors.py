"""Shared pipeline exceptions."""
from __future__ import annotations


class StageError(RuntimeError):
    """Failure inside one optimization stage, tagged for CLI reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
