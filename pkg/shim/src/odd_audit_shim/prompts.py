"""Prompt-weight syntax: "(token:w)" marks a token whose encoding is scaled
by w.  Everything else in the prompt carries weight 1.
"""
import re

WEIGHT_RE = re.compile(r"\(([^:()]+):([0-9.]+)\)")


def parse_weighted_prompt(prompt: str) -> list[tuple[str, float]]:
    """Split a prompt into (token, weight) pairs.

    Weighted spans keep their parenthesized position in the token order;
    multi-word spans stay one token, so "(fire truck:1.5)" scales as a unit.
    """
    out: list[tuple[str, float]] = []
    cursor = 0
    for m in WEIGHT_RE.finditer(prompt):
        out.extend(_plain_tokens(prompt[cursor : m.start()]))
        token = m.group(1).strip()
        if token:
            try:
                weight = float(m.group(2))
            except ValueError:
                weight = 1.0
            out.append((token, weight))
        cursor = m.end()
    out.extend(_plain_tokens(prompt[cursor:]))
    return out


def _plain_tokens(text: str) -> list[tuple[str, float]]:
    return [(t, 1.0) for t in re.findall(r"[^\s.,;!?]+", text)]
