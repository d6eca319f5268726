"""Access to the editable prompt asset files shipped with the package."""

from __future__ import annotations

import json
from importlib import resources


def load_prompt(name: str) -> str:
    return (resources.files("ecp.prompts") / f"{name}.txt").read_text("utf-8")


def load_fewshot_examples(limit: int | None = None) -> list[dict]:
    text = (resources.files("ecp.prompts") / "formalize_fewshot.jsonl").read_text("utf-8")
    examples = [json.loads(line) for line in text.splitlines() if line.strip()]
    return examples[:limit] if limit is not None else examples
