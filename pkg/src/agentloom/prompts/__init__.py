"""Versioned prompt files shipped with the package."""
from importlib import resources


def load_prompt(name: str) -> str:
    """Read a prompt file (e.g. ``clarify_v1``) bundled under prompts/."""
    return resources.files(__package__).joinpath(f"{name}.md").read_text(encoding="utf-8")
