"""JSON instance files.

Layout: ``n``, ``a``, ``discount``, ``rewards`` (row-major n x A nested
lists), ``transitions`` (one ``[[state, prob], ...]`` list per (i, a) in
row-major order), optional ``initial_dist`` and ``provenance``. Floats are
written with ``repr`` (shortest round-trip form), so load(save(m)) is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mdp import Mdp


def mdp_to_dict(mdp: Mdp) -> dict:
    doc = {
        "n": mdp.n,
        "a": mdp.a,
        "discount": mdp.discount,
        "rewards": mdp.rewards.tolist(),
        "transitions": [[[j, p] for j, p in mdp.rows(i, k)]
                        for i in range(mdp.n) for k in range(mdp.a)],
    }
    if mdp.initial_dist is not None:
        doc["initial_dist"] = mdp.initial_dist.tolist()
    if mdp.provenance is not None:
        doc["provenance"] = mdp.provenance
    return doc


def mdp_from_dict(doc: dict) -> Mdp:
    try:
        n, a = int(doc["n"]), int(doc["a"])
        rewards = np.asarray(doc["rewards"], dtype=np.float64).reshape(n, a)
        rows = [[(int(j), float(p)) for j, p in row] for row in doc["transitions"]]
        discount = float(doc["discount"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed MDP document: {exc}") from exc
    return Mdp.from_rows(rows, rewards, discount, n, a,
                         initial_dist=doc.get("initial_dist"),
                         provenance=doc.get("provenance"))


def save_mdp(mdp: Mdp, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp)))


def load_mdp(path) -> Mdp:
    return mdp_from_dict(json.loads(Path(path).read_text()))
