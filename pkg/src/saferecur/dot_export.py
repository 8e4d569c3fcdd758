"""DOT (GraphViz) rendering of chain structure.

Only positive-probability transitions become edges. With two actions the
edge styles are solid (action 1) and dashed (action 2); with more actions
the edges carry the action label instead.
"""

from __future__ import annotations

import numpy as np

from .chainfile import ChainDocument

_TWO_ACTION_STYLES = ("solid", "dashed")


def _quote(label: str) -> str:
    return '"' + label.replace('"', '\\"') + '"'


def render_chain_dot(doc: ChainDocument) -> str:
    """The full controlled chain: one styled edge family per action."""
    chain = doc.chain
    lines = ["digraph chain {", "  rankdir=LR;"]
    for x in range(chain.n):
        attrs = []
        if x in chain.forbidden:
            attrs.append("style=filled")
            attrs.append("fillcolor=gray80")
            attrs.append('xlabel="forbidden"')
        lines.append(
            f"  {_quote(doc.state_labels[x])}"
            + (" [" + ", ".join(attrs) + "]" if attrs else "")
            + ";"
        )
    for x in range(chain.n):
        for u in range(chain.m):
            for y in np.flatnonzero(chain.kernel[x, u]):
                if chain.m == 2:
                    attr = f"style={_TWO_ACTION_STYLES[u]}"
                else:
                    attr = f"label={_quote(doc.action_labels[u])}"
                lines.append(
                    f"  {_quote(doc.state_labels[x])} ->"
                    f" {_quote(doc.state_labels[int(y)])} [{attr}];"
                )
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_closed_loop_dot(
    doc: ChainDocument,
    support_states: frozenset[int] | set[int],
    transition: np.ndarray,
) -> str:
    """Closed-loop edges of a synthesized policy, restricted to its support."""
    chain = doc.chain
    lines = ["digraph closed_loop {", "  rankdir=LR;"]
    for x in range(chain.n):
        attrs = []
        if x in chain.forbidden:
            attrs.append("style=filled")
            attrs.append("fillcolor=gray80")
            attrs.append('xlabel="forbidden"')
        elif x not in support_states:
            attrs.append("color=gray60")
            attrs.append("fontcolor=gray60")
        lines.append(
            f"  {_quote(doc.state_labels[x])}"
            + (" [" + ", ".join(attrs) + "]" if attrs else "")
            + ";"
        )
    for x in sorted(support_states):
        for y in np.flatnonzero(transition[x]):
            lines.append(
                f"  {_quote(doc.state_labels[x])} ->"
                f" {_quote(doc.state_labels[int(y)])}"
                f' [label="{transition[x, int(y)]:.2f}"];'
            )
    lines.append("}")
    return "\n".join(lines) + "\n"
