"""Reading and writing chain description files.

A chain file is a JSON document:

- ``"states"``: a state count or a list of unique labels,
- ``"actions"``: an action count or a list of unique labels,
- ``"transitions"``: one row-stochastic n-by-n matrix per action (row =
  current state), either a list in action order or an object keyed by
  action label,
- ``"forbidden"``: optional list of state labels or 1-based indices,
- ``"constraints"``: optional list of ``{"h": [per-action cost], "beta": b}``.

Unknown fields are an error unless explicitly allowed, in which case they
become warnings. Integer state references in files are 1-based; the parsed
in-memory chain uses 0-based indices like the rest of the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .chain_model import ControlledChain, validate
from .maxent import LinearConstraint

_KNOWN_FIELDS = {"states", "actions", "transitions", "forbidden", "constraints"}


class ChainFileError(ValueError):
    """The document does not describe a valid chain."""


@dataclass(frozen=True, eq=False)
class ChainDocument:
    chain: ControlledChain
    state_labels: tuple[str, ...]
    action_labels: tuple[str, ...]
    constraints: tuple[LinearConstraint, ...] = ()
    warnings: tuple[str, ...] = ()

    def label_of(self, state: int) -> str:
        return self.state_labels[state]


def _parse_axis(value, what: str) -> tuple[str, ...]:
    if isinstance(value, int):
        if value < 1:
            raise ChainFileError(f'"{what}" must be at least 1')
        return tuple(str(i) for i in range(1, value + 1))
    if isinstance(value, list) and value and all(isinstance(s, str) for s in value):
        if len(set(value)) != len(value):
            raise ChainFileError(f'"{what}" labels must be unique')
        return tuple(value)
    raise ChainFileError(f'"{what}" must be a count or a list of string labels')


def _parse_matrix(raw, n: int, where: str) -> np.ndarray:
    try:
        mat = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ChainFileError(f"{where}: not a numeric matrix") from exc
    if mat.shape != (n, n):
        raise ChainFileError(f"{where}: expected a {n}x{n} matrix, got {mat.shape}")
    return mat


def _state_index(ref, labels: tuple[str, ...]) -> int:
    if isinstance(ref, bool):
        raise ChainFileError(f"forbidden entry {ref!r} is not a state")
    if isinstance(ref, int):
        if not 1 <= ref <= len(labels):
            raise ChainFileError(
                f"forbidden state {ref} outside the range 1..{len(labels)}"
            )
        return ref - 1
    if isinstance(ref, str):
        try:
            return labels.index(ref)
        except ValueError:
            raise ChainFileError(f"unknown forbidden state label {ref!r}") from None
    raise ChainFileError(f"forbidden entry {ref!r} is not a state")


def parse_chain_dict(doc: dict, allow_unknown: bool = False) -> ChainDocument:
    if not isinstance(doc, dict):
        raise ChainFileError("top level of a chain file must be an object")
    warnings = []
    unknown = sorted(set(doc) - _KNOWN_FIELDS)
    if unknown:
        message = "unknown fields: " + ", ".join(unknown)
        if not allow_unknown:
            raise ChainFileError(message)
        warnings.append(message)
    for required in ("states", "actions", "transitions"):
        if required not in doc:
            raise ChainFileError(f'missing required field "{required}"')

    state_labels = _parse_axis(doc["states"], "states")
    action_labels = _parse_axis(doc["actions"], "actions")
    n, m = len(state_labels), len(action_labels)

    raw_transitions = doc["transitions"]
    matrices: list[np.ndarray] = []
    if isinstance(raw_transitions, dict):
        missing = [a for a in action_labels if a not in raw_transitions]
        extra = sorted(set(raw_transitions) - set(action_labels))
        if missing or extra:
            raise ChainFileError(
                "transition matrices must be keyed exactly by the action labels"
            )
        for a in action_labels:
            matrices.append(_parse_matrix(raw_transitions[a], n, f'transitions["{a}"]'))
    elif isinstance(raw_transitions, list):
        if len(raw_transitions) != m:
            raise ChainFileError(
                f"expected {m} transition matrices, got {len(raw_transitions)}"
            )
        for u, raw in enumerate(raw_transitions):
            matrices.append(_parse_matrix(raw, n, f"transitions[{u}]"))
    else:
        raise ChainFileError('"transitions" must be a list or an object')

    forbidden = frozenset(
        _state_index(ref, state_labels) for ref in doc.get("forbidden", [])
    )

    constraints = []
    for i, raw in enumerate(doc.get("constraints", [])):
        if not isinstance(raw, dict):
            raise ChainFileError(f"constraints[{i}] must be an object")
        bad = sorted(set(raw) - {"h", "beta"})
        if bad:
            message = f"constraints[{i}]: unknown fields: " + ", ".join(bad)
            if not allow_unknown:
                raise ChainFileError(message)
            warnings.append(message)
        if "h" not in raw or "beta" not in raw:
            raise ChainFileError(f'constraints[{i}] needs "h" and "beta"')
        h = np.asarray(raw["h"], dtype=float)
        if h.shape != (m,):
            raise ChainFileError(
                f'constraints[{i}]: "h" must have one entry per action ({m})'
            )
        constraints.append(LinearConstraint(action_costs=h, bound=float(raw["beta"])))

    kernel = np.stack(matrices, axis=1)  # (n, m, n)
    chain = ControlledChain(kernel=kernel, forbidden=forbidden)
    report = validate(chain)
    if not report.ok:
        raise ChainFileError("; ".join(report.violations))
    return ChainDocument(
        chain=chain,
        state_labels=state_labels,
        action_labels=action_labels,
        constraints=tuple(constraints),
        warnings=tuple(warnings),
    )


def load_chain_file(path: str | Path, allow_unknown: bool = False) -> ChainDocument:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ChainFileError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChainFileError(f"{path} is not valid JSON: {exc}") from exc
    return parse_chain_dict(doc, allow_unknown=allow_unknown)


def document_to_dict(doc: ChainDocument) -> dict:
    """Serialize back to the file schema (labels spelled out)."""
    out: dict = {
        "states": list(doc.state_labels),
        "actions": list(doc.action_labels),
        "transitions": [doc.chain.kernel[:, u, :].tolist() for u in range(doc.chain.m)],
        "forbidden": [doc.state_labels[x] for x in sorted(doc.chain.forbidden)],
    }
    if doc.constraints:
        out["constraints"] = [
            {"h": con.action_costs.tolist(), "beta": con.bound}
            for con in doc.constraints
        ]
    return out


def save_chain_file(doc: ChainDocument, path: str | Path) -> None:
    Path(path).write_text(json.dumps(document_to_dict(doc), indent=2) + "\n")


def example1_path() -> Path:
    """Location of the bundled eight-state, two-action demonstration chain."""
    return Path(resources.files("saferecur").joinpath("data/example1.json"))
