import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfnddi.errors import ParseError, ValidationError, ContractError
from gfnddi.graph import (Edge, InteractionGraph, ingest_edge_list, load_graph, save_graph,
                          split_edges, type_frequencies, union)


def _stream(text):
    return io.BytesIO(text.encode("utf-8"))


class TestIngest:
    def test_three_rows(self):
        g = ingest_edge_list(_stream("drug_a,drug_b,type\nA,B,t1\nB,C,t2\nA,C,t1\n"))
        assert g.num_drugs == 3
        assert g.num_edges == 3
        assert type_frequencies(g) == {"t1": 2, "t2": 1}
        assert g.drugs == ("A", "B", "C")

    def test_symmetric_duplicate_dropped(self):
        with pytest.warns(UserWarning, match="dropped 1 duplicate"):
            g = ingest_edge_list(_stream("drug_a\tdrug_b\ttype\nA\tB\tt1\nB\tA\tt1\n"))
        assert g.num_edges == 1
        assert g.edges == [Edge(0, 1, 0)]

    def test_same_pair_different_types_kept(self):
        g = ingest_edge_list(_stream("drug_a,drug_b,type\nA,B,t1\nB,A,t2\n"))
        assert g.num_edges == 2

    def test_self_loop(self):
        with pytest.raises(ValidationError, match="self-loop"):
            ingest_edge_list(_stream("drug_a,drug_b,type\nA,A,t1\n"))

    def test_wrong_column_count_reports_line(self):
        with pytest.raises(ParseError) as exc:
            ingest_edge_list(_stream("drug_a,drug_b,type\nA,B,t1\nA,B\n"))
        assert exc.value.line == 3

    @pytest.mark.parametrize("text", ["", "drug_a,drug_b,type\n"])
    def test_empty(self, text):
        with pytest.raises(ValidationError):
            ingest_edge_list(_stream(text))

    def test_bad_header(self):
        with pytest.raises(ParseError):
            ingest_edge_list(_stream("x,y,z\nA,B,t\n"))

    def test_text_stream_and_path(self, tmp_path):
        text = "drug_a,drug_b,type\nA,B,t1\n"
        p = tmp_path / "e.csv"
        p.write_text(text)
        assert ingest_edge_list(p) == ingest_edge_list(io.StringIO(text))

    def test_fixed_vocabulary_rejects_unknown(self):
        with pytest.raises(ValidationError, match="unknown drug"):
            ingest_edge_list(_stream("drug_a,drug_b,type\nA,Z,t\n"), vocabulary=(["A", "B"], ["t"]))


class TestGraph:
    def test_invariants_enforced(self):
        with pytest.raises(ValidationError):
            InteractionGraph(["a", "b"], ["t"], [(0, 2, 0)])
        with pytest.raises(ValidationError):
            InteractionGraph(["a", "b"], ["t"], [(0, 1, 0), (1, 0, 0)])
        with pytest.raises(ValidationError):
            InteractionGraph(["a", "a"], ["t"], [])

    def test_canonical_storage(self):
        g = InteractionGraph(["a", "b", "c"], ["t"], [(2, 0, 0)])
        assert g.edges == [Edge(0, 2, 0)]
        assert (2, 0, 0) in g

    def test_immutable_arrays(self):
        g = InteractionGraph(["a", "b"], ["t"], [(0, 1, 0)])
        with pytest.raises(ValueError):
            g.edge_array[0, 0] = 1

    def test_type_frequencies(self):
        g = InteractionGraph(["0", "1", "2"], ["a", "b", "c"], [(0, 1, 0), (0, 2, 0), (1, 2, 1)])
        assert type_frequencies(g) == {"a": 2, "b": 1, "c": 0}
        g2 = union(g, [(0, 1, 1)])
        assert type_frequencies(g2) == {"a": 2, "b": 2, "c": 0}

    def test_round_trip(self, tmp_path, toy_graph):
        save_graph(toy_graph, tmp_path / "e.tsv", tmp_path / "v.tsv")
        again = load_graph(tmp_path / "e.tsv", tmp_path / "v.tsv")
        assert again == toy_graph
        save_graph(again, tmp_path / "e2.tsv", tmp_path / "v2.tsv")
        assert (tmp_path / "e.tsv").read_bytes() == (tmp_path / "e2.tsv").read_bytes()


triples = st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7), st.integers(0, 2)), max_size=60)


@settings(max_examples=60, deadline=None)
@given(triples)
def test_counts_sum_to_edges(rows):
    rows = {(min(a, b), max(a, b), t) for a, b, t in rows if a != b}
    g = InteractionGraph([str(i) for i in range(8)], ["x", "y", "z"], sorted(rows))
    assert sum(type_frequencies(g).values()) == g.num_edges


class TestSplit:
    def test_exact_stratification(self):
        rng = np.random.default_rng(0)
        pairs = set()
        while len(pairs) < 100:
            a, b = sorted(rng.choice(30, 2, replace=False).tolist())
            pairs.add((a, b))
        g = InteractionGraph([str(i) for i in range(30)], ["t"], [(a, b, 0) for a, b in sorted(pairs)])
        s = split_edges(g, (0.6, 0.2, 0.2), seed=3)
        assert (s.train.num_edges, s.valid.num_edges, s.test.num_edges) == (60, 20, 20)

    def test_small_class_goes_to_train(self, toy_graph):
        g = union(InteractionGraph(toy_graph.drugs, ["a", "b", "rare"], toy_graph.edge_array),
                  [(0, 5, 2), (1, 5, 2)])
        s = split_edges(g, (0.6, 0.2, 0.2), seed=0)
        assert s.train.type_counts[2] == 2
        assert s.valid.type_counts[2] == 0 and s.test.type_counts[2] == 0

    def test_partition_and_determinism(self, toy_graph):
        a = split_edges(toy_graph, (0.5, 0.25, 0.25), seed=7)
        b = split_edges(toy_graph, (0.5, 0.25, 0.25), seed=7)
        assert a == b
        parts = [a.train.edge_set, a.valid.edge_set, a.test.edge_set]
        assert parts[0] | parts[1] | parts[2] == toy_graph.edge_set
        assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
        assert a.train.same_vocabulary(toy_graph)

    def test_errors(self, toy_graph):
        with pytest.raises(ContractError):
            split_edges(toy_graph, (0.5, 0.5, 0.5))
        with pytest.raises(ContractError):
            split_edges(toy_graph, (1.0, 0.0, 0.0))
        with pytest.raises(ValidationError):
            split_edges(InteractionGraph(["a", "b"], ["t"], []), (0.6, 0.2, 0.2))
