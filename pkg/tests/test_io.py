import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpaccel.instances import GarnetSpec, garnet, hard_chain
from mdpaccel.io import load_mdp, mdp_from_dict, mdp_to_dict, save_mdp
from mdpaccel.mdp import Mdp


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12), a=st.integers(1, 4),
       lam=st.floats(0.01, 0.999))
def test_roundtrip_exact(tmp_path_factory, seed, n, a, lam):
    mdp = garnet(GarnetSpec(n, a, seed=seed), lam)
    path = tmp_path_factory.mktemp("io") / "m.json"
    save_mdp(mdp, path)
    back = load_mdp(path)
    assert back.discount == mdp.discount
    np.testing.assert_array_equal(back.rewards, mdp.rewards)
    assert (back.transitions != mdp.transitions).nnz == 0
    assert back.provenance == mdp.provenance


def test_initial_dist_roundtrip():
    base = hard_chain(3, 0.5)
    mdp = Mdp(3, 1, base.transitions, base.rewards, 0.5, initial_dist=[0.2, 0.3, 0.5])
    back = mdp_from_dict(json.loads(json.dumps(mdp_to_dict(mdp))))
    np.testing.assert_array_equal(back.initial_dist, [0.2, 0.3, 0.5])


@pytest.mark.parametrize("doc", [{}, {"n": 2, "a": 1}, {"n": 2, "a": 1, "discount": 0.5,
                                                         "rewards": [[0], [0]],
                                                         "transitions": [[[0]], [[0, 1.0]]]}])
def test_malformed(doc):
    with pytest.raises(ValueError):
        mdp_from_dict(doc)


def test_invalid_probabilities_rejected():
    doc = mdp_to_dict(hard_chain(2, 0.5))
    doc["transitions"][0] = [[0, 0.7]]
    with pytest.raises(ValueError, match="sums to"):
        mdp_from_dict(doc)
