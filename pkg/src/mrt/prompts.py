"""Prompt template loading and {{placeholder}} substitution."""
from __future__ import annotations

import re
from pathlib import Path

from .errors import UnboundPlaceholderError, UnknownTemplateError

_TEMPLATE_DIR = Path(__file__).resolve().parent / "templates"
_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


def load_template(template_name: str, template_dir: str | Path | None = None) -> str:
    path = (Path(template_dir) if template_dir else _TEMPLATE_DIR) / f"{template_name}.txt"
    if not path.is_file():
        raise UnknownTemplateError(template_name)
    return path.read_text(encoding="utf-8")


def render_prompt(
    template_name: str,
    variables: dict[str, object],
    template_dir: str | Path | None = None,
) -> str:
    """Substitute every {{name}} in the template.

    An unbound placeholder is an error; extra variables are ignored.
    """
    text = load_template(template_name, template_dir)

    def _sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in variables:
            raise UnboundPlaceholderError(key)
        return str(variables[key])

    return _PLACEHOLDER.sub(_sub, text)
