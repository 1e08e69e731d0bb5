"""Prompt construction from the registry templates."""

from __future__ import annotations

from ..relabel import load_prompt
from .tasks import BenchmarkTask


class InvalidSampleError(ValueError):
    pass


_PLACEHOLDERS = {
    "<question>": "question",
    "<comma_separated_MC_list>": "options",
    "<comma_separated_options>": "options",
    "<comma_separated_hyphen_fused_hierarchical_classes>": "options",
}


def build_benchmark_prompt(
    task: BenchmarkTask, sample: dict, rural_urban_literal: bool = False
) -> str:
    """Substitute sample fields into the task template.

    The rural/urban task defaults to the rural/urban answer options; the
    literal yes/no variant is available behind the flag.
    """
    template = task.template
    if task.kind == "rural_urban" and rural_urban_literal:
        template = "rsvqa_rural_urban_literal"
    text = load_prompt(template)
    for placeholder, field in _PLACEHOLDERS.items():
        if placeholder not in text:
            continue
        value = sample.get(field)
        if value is None:
            raise InvalidSampleError(
                f"sample {sample.get('id')!r} missing field {field!r} "
                f"required by template {template}"
            )
        if field == "options":
            value = ", ".join(value) if isinstance(value, (list, tuple)) else value
        text = text.replace(placeholder, str(value))
    return text
