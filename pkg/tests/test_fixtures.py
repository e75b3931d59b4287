import numpy as np
import pytest

from gfnddi.errors import ContractError
from gfnddi.fixtures import FixtureSpec, geometric_counts, make_fixture, write_fixture


def test_ratio_one_is_near_uniform():
    counts = make_fixture(FixtureSpec(ratio=1.0)).graph.type_counts
    assert counts.max() / counts.min() <= 1.2


def test_geometric_counts():
    g = make_fixture(FixtureSpec()).graph
    assert g.num_edges == 2000
    w = 0.5 ** np.arange(8)
    exact = 2000 * w / w.sum()
    assert (np.abs(g.type_counts - exact) < 1).all()
    np.testing.assert_array_equal(g.type_counts, geometric_counts(2000, 8, 0.5))


def test_planted_blocks_are_enriched():
    fx = make_fixture(FixtureSpec(seed=3))
    c = fx.clusters
    iu, ju = np.triu_indices(fx.spec.num_drugs, k=1)
    all_lo, all_hi = np.sort(np.stack([c[iu], c[ju]]), axis=0)
    for t, (a, b) in enumerate(fx.type_blocks):
        e = fx.graph.edge_array[fx.graph.edge_types == t]
        lo, hi = np.sort(np.stack([c[e[:, 0]], c[e[:, 1]]]), axis=0)
        # frequent types saturate their block, so compare with the block's share of all pairs
        assert np.mean((lo == a) & (hi == b)) > np.mean((all_lo == a) & (all_hi == b))


def test_same_seed_same_files(tmp_path):
    a = write_fixture(FixtureSpec(seed=5), tmp_path / "a")
    b = write_fixture(FixtureSpec(seed=5), tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes(), pa.name
    c = write_fixture(FixtureSpec(seed=6), tmp_path / "c")
    assert c[0].read_bytes() != a[0].read_bytes()


@pytest.mark.parametrize("kw", [dict(num_types=1), dict(num_drugs=3), dict(num_edges=5),
                                dict(num_drugs=10, num_edges=2000), dict(ratio=0.0)])
def test_infeasible(kw):
    with pytest.raises(ContractError):
        make_fixture(FixtureSpec(**kw))
