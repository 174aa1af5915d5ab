"""Render environment states as the textual observation block and the three
prompt schemes (standard / normal / out-path-aware).

The exact byte layout is frozen by golden files under tests/goldens; these
strings feed encoders, so even whitespace changes are breaking.
"""

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .graph import EQUAL_NAME

SCHEME_STANDARD = "standard"
SCHEME_NORMAL = "normal"
SCHEME_OUT_PATH_AWARE = "opa"

TASK_BACKGROUND = "Performing 2-hop reasoning on the knowledge graph."

INSTRUCTION_DIRECT = (
    "If you don't think it's necessary to perform the second hop in reasoning, "
    "stop the reasoning with the 'Equal' relation.\n"
    "Given the Task Background and the Environment, directly output this path "
    "in triplet format without any other content."
)

INSTRUCTION_OUT_PATH_AWARE = (
    "Given the Task Background and the Environment, please choose select two "
    "consecutive paths KG path from a set of Out Paths.\n"
    "If you don't think it's necessary to perform the second hop in reasoning, "
    "just select the 'Equal' relation at the second hop.\n"
    "Directly output these path in triplet format without any other content."
)


@dataclass
class PromptScheme:
    kind: str
    task_background: str = TASK_BACKGROUND
    instruction: str = INSTRUCTION_DIRECT
    examples: list = field(default_factory=list)


def default_scheme(kind, examples=None):
    if kind not in (SCHEME_STANDARD, SCHEME_NORMAL, SCHEME_OUT_PATH_AWARE):
        raise ConfigError(f"unknown prompt scheme {kind!r}")
    instruction = INSTRUCTION_OUT_PATH_AWARE if kind == SCHEME_OUT_PATH_AWARE else INSTRUCTION_DIRECT
    return PromptScheme(kind=kind, instruction=instruction, examples=list(examples or []))


def _quoted_list(items):
    return "[" + ",".join(json.dumps(s, ensure_ascii=False) for s in items) + "]"


def _path_history(ph, graph):
    triples = [[graph.entity_name(h), graph.relation_name(r), graph.entity_name(t)]
               for h, r, t in ph]
    return json.dumps(triples, ensure_ascii=False, separators=(",", ":"))


def render_fte(state, graph):
    """The full observation block; byte-stable for a fixed state."""
    return "\n".join([
        "### Environment:",
        "Dialog History: " + _quoted_list(state.h),
        "Utterance: " + state.q,
        "Path History: " + _path_history(state.ph, graph),
        "Current Entity: " + graph.entity_name(state.v_c),
    ])


def _render_environment(scheme, state, graph, max_out, seed):
    lines = ["### Environment:"]
    if scheme.kind != SCHEME_STANDARD:
        lines.append("Dialog History: " + _quoted_list(state.h))
    lines.append("Utterance: " + state.q)
    if scheme.kind != SCHEME_STANDARD:
        lines.append("Path History: " + _path_history(state.ph, graph))
    lines.append("Current Entity: " + graph.entity_name(state.v_c))
    if scheme.kind == SCHEME_OUT_PATH_AWARE:
        paths = render_out_paths(state, graph, max_out, seed)
        lines.append("Out Path: [" + ", ".join("'" + p + "'" for p in paths) + "]")
    return lines


def render_out_paths(state, graph, max_out, seed):
    """First-hop exits plus their second-hop exits as "head,relation,tail"
    strings, deduplicated in encounter order."""
    out = []
    seen = set()

    def add(h, r, t):
        text = f"{graph.entity_name(h)},{graph.relation_name(r)},{graph.entity_name(t)}"
        if text not in seen:
            seen.add(text)
            out.append(text)

    rels, dsts = graph.out_edges_of(state.v_c, max_out, seed)
    for r, d in zip(rels, dsts):
        add(state.v_c, int(r), int(d))
    for r, d in zip(rels, dsts):
        if graph.relation_name(int(r)) == EQUAL_NAME:
            continue
        rels2, dsts2 = graph.out_edges_of(int(d), max_out, seed)
        for r2, d2 in zip(rels2, dsts2):
            add(int(d), int(r2), int(d2))
    return out


def render_prompt(scheme, state, graph, max_out=50, seed=0):
    """Full prompt text for one state under the given scheme."""
    parts = [
        "### Task Background",
        scheme.task_background,
        "",
        "### Instruction",
        scheme.instruction,
        "",
    ]
    parts.extend(_render_environment(scheme, state, graph, max_out, seed))
    parts.append("")
    parts.append("### Examples")
    parts.extend(scheme.examples)
    parts.append("")
    parts.append("### Response")
    return "\n".join(parts)
