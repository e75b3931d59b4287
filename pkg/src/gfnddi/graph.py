"""Multi-relational interaction graph: storage, ingestion, splitting."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, ParseError, ValidationError

HEADER = ("drug_a", "drug_b", "type")


class Edge(NamedTuple):
    first: int
    second: int
    type: int


def canonical(a: int, b: int, t: int) -> Edge:
    return Edge(a, b, t) if a < b else Edge(b, a, t)


class InteractionGraph:
    """Immutable typed, undirected edge set over a fixed drug/type vocabulary.

    Edges are stored canonically (``first < second``) in three parallel,
    read-only integer arrays. Several types per drug pair are allowed.
    """

    def __init__(self, drugs: Sequence[str], types: Sequence[str], triples: Iterable[Tuple[int, int, int]]):
        self.drugs = tuple(str(d) for d in drugs)
        self.types = tuple(str(t) for t in types)
        if len(set(self.drugs)) != len(self.drugs):
            raise ValidationError("drug labels must be unique")
        if len(set(self.types)) != len(self.types):
            raise ValidationError("type labels must be unique")
        arr = np.asarray(list(triples), dtype=np.int64).reshape(-1, 3)
        n, m = len(self.drugs), len(self.types)
        if arr.size:
            if (arr[:, :2] < 0).any() or (arr[:, :2] >= n).any():
                raise ValidationError("edge references a drug index out of range")
            if (arr[:, 2] < 0).any() or (arr[:, 2] >= m).any():
                raise ValidationError("edge references a type index out of range")
            if (arr[:, 0] == arr[:, 1]).any():
                raise ValidationError("self-loop edges are not allowed")
            lo = np.minimum(arr[:, 0], arr[:, 1])
            hi = np.maximum(arr[:, 0], arr[:, 1])
            arr = np.stack([lo, hi, arr[:, 2]], axis=1)
            if len(np.unique(arr, axis=0)) != len(arr):
                raise ValidationError("duplicate (pair, type) triples")
        self._edges = arr
        self._edges.setflags(write=False)
        counts = np.bincount(arr[:, 2], minlength=m) if arr.size else np.zeros(m, dtype=np.int64)
        self._counts = counts.astype(np.int64)
        self._counts.setflags(write=False)
        self._edge_set = None

    # sizes -----------------------------------------------------------------
    @property
    def num_drugs(self) -> int:
        return len(self.drugs)

    @property
    def num_types(self) -> int:
        return len(self.types)

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def __len__(self):
        return self.num_edges

    # edge access -------------------------------------------------------------
    @property
    def edge_array(self) -> np.ndarray:
        """(E, 3) int array of canonical (first, second, type) rows."""
        return self._edges

    @property
    def heads(self) -> np.ndarray:
        return self._edges[:, 0]

    @property
    def tails(self) -> np.ndarray:
        return self._edges[:, 1]

    @property
    def edge_types(self) -> np.ndarray:
        return self._edges[:, 2]

    @property
    def edges(self) -> List[Edge]:
        return [Edge(*map(int, row)) for row in self._edges]

    @property
    def edge_set(self) -> frozenset:
        if self._edge_set is None:
            self._edge_set = frozenset(self.edges)
        return self._edge_set

    def __contains__(self, edge) -> bool:
        return canonical(*edge) in self.edge_set

    @property
    def type_counts(self) -> np.ndarray:
        return self._counts

    def same_vocabulary(self, other: "InteractionGraph") -> bool:
        return self.drugs == other.drugs and self.types == other.types

    def with_edges(self, triples) -> "InteractionGraph":
        return InteractionGraph(self.drugs, self.types, triples)

    def pair_set(self) -> frozenset:
        return frozenset(map(tuple, self._edges[:, :2].tolist()))

    def __eq__(self, other):
        if not isinstance(other, InteractionGraph):
            return NotImplemented
        return self.same_vocabulary(other) and np.array_equal(self._edges, other._edges)

    def __repr__(self):
        return f"InteractionGraph(drugs={self.num_drugs}, types={self.num_types}, edges={self.num_edges})"


def type_frequencies(g: InteractionGraph) -> Dict[str, int]:
    """Edge count per interaction type label (zero for unused types)."""
    return {label: int(c) for label, c in zip(g.types, g.type_counts)}


@dataclass(frozen=True)
class DatasetSplit:
    train: InteractionGraph
    valid: InteractionGraph
    test: InteractionGraph


# ---------------------------------------------------------------------------
# text formats
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeListFormat:
    delimiter: Optional[str] = None  # None: sniff from the header line
    encoding: str = "utf-8"


def _detect_delimiter(header: str) -> str:
    if "\t" in header:
        return "\t"
    if "," in header:
        return ","
    raise ParseError("header must be tab- or comma-delimited", line=1)


def _read_rows(source, fmt: EdgeListFormat):
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding=fmt.encoding)
    else:
        raw = source.read()
        text = raw.decode(fmt.encoding) if isinstance(raw, bytes) else raw
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ValidationError("empty edge list")
    delim = fmt.delimiter or _detect_delimiter(lines[0])
    reader = csv.reader(lines, delimiter=delim)
    header = [h.strip().lower() for h in next(reader)]
    if tuple(header[:3]) != HEADER:
        raise ParseError(f"expected header {','.join(HEADER)}, got {','.join(header)}", line=1)
    width = len(header)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} columns, got {len(row)}", line=lineno)
        rows.append((lineno, [c.strip() for c in row]))
    return header, rows


def ingest_edge_list(source, fmt: EdgeListFormat = EdgeListFormat(),
                     vocabulary: Optional[Tuple[Sequence[str], Sequence[str]]] = None,
                     ) -> InteractionGraph:
    """Parse a drug_a/drug_b/type edge list into a validated graph.

    Without ``vocabulary`` indices are assigned in first-seen order. Duplicate
    rows (after ordering each pair) are dropped with a warning.
    """
    _, rows = _read_rows(source, fmt)
    if not rows:
        raise ValidationError("edge list has no rows")
    if vocabulary is None:
        drugs: Dict[str, int] = {}
        types: Dict[str, int] = {}
        fixed = False
    else:
        drugs = {d: k for k, d in enumerate(vocabulary[0])}
        types = {t: k for k, t in enumerate(vocabulary[1])}
        fixed = True

    def index(table, label, lineno, what):
        if label not in table:
            if fixed:
                raise ValidationError(f"line {lineno}: unknown {what} {label!r}")
            table[label] = len(table)
        return table[label]

    seen, triples, dropped = set(), [], 0
    for lineno, (a, b, t, *_rest) in rows:
        if a == b:
            raise ValidationError(f"line {lineno}: self-loop on drug {a!r}")
        i = index(drugs, a, lineno, "drug")
        j = index(drugs, b, lineno, "drug")
        k = index(types, t, lineno, "type")
        e = canonical(i, j, k)
        if e in seen:
            dropped += 1
            continue
        seen.add(e)
        triples.append(e)
    if dropped:
        warnings.warn(f"dropped {dropped} duplicate edge rows", stacklevel=2)
    return InteractionGraph(list(drugs), list(types), triples)


def write_edge_list(g: InteractionGraph, path, provenance: Optional[str] = None,
                    edges: Optional[np.ndarray] = None):
    """Write edges as tab-delimited text using drug/type labels."""
    rows = g.edge_array if edges is None else edges
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(HEADER + (("provenance",) if provenance else ()))
    for a, b, t in rows.tolist():
        row = [g.drugs[a], g.drugs[b], g.types[t]]
        if provenance:
            row.append(provenance)
        w.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_vocabulary(g: InteractionGraph, path):
    """Sidecar with one ``kind<TAB>index<TAB>label`` row per drug and type."""
    lines = ["kind\tindex\tlabel"]
    lines += [f"drug\t{k}\t{d}" for k, d in enumerate(g.drugs)]
    lines += [f"type\t{k}\t{t}" for k, t in enumerate(g.types)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_vocabulary(path) -> Tuple[List[str], List[str]]:
    drugs, types = {}, {}
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header != ["kind", "index", "label"]:
            raise ParseError("vocabulary header must be kind, index, label", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 or row[0] not in ("drug", "type"):
                raise ParseError("malformed vocabulary row", line=lineno)
            (drugs if row[0] == "drug" else types)[int(row[1])] = row[2]
    for table, what in ((drugs, "drug"), (types, "type")):
        if sorted(table) != list(range(len(table))):
            raise ValidationError(f"{what} indices in vocabulary are not dense")
    return [drugs[k] for k in range(len(drugs))], [types[k] for k in range(len(types))]


def save_graph(g: InteractionGraph, edge_path, vocab_path):
    write_edge_list(g, edge_path)
    write_vocabulary(g, vocab_path)


def load_graph(edge_path, vocab_path) -> InteractionGraph:
    return ingest_edge_list(edge_path, vocabulary=read_vocabulary(vocab_path))


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def split_edges(g: InteractionGraph, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> DatasetSplit:
    """Per-type stratified split; types with fewer than 3 edges stay in train."""
    f = np.asarray(fractions, dtype=np.float64)
    if f.shape != (3,) or (f <= 0).any() or abs(f.sum() - 1.0) > 1e-9:
        raise ContractError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    if g.num_edges == 0:
        raise ValidationError("cannot split a graph with no edges")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for t in range(g.num_types):
        idx = np.flatnonzero(g.edge_types == t)
        if len(idx) == 0:
            continue
        if len(idx) < 3:
            parts[0].extend(idx.tolist())
            continue
        idx = idx[rng.permutation(len(idx))]
        n_valid = int(round(f[1] * len(idx)))
        n_test = int(round(f[2] * len(idx)))
        n_train = len(idx) - n_valid - n_test
        parts[0].extend(idx[:n_train].tolist())
        parts[1].extend(idx[n_train:n_train + n_valid].tolist())
        parts[2].extend(idx[n_train + n_valid:].tolist())
    graphs = [g.with_edges(g.edge_array[np.sort(np.asarray(p, dtype=np.int64))]) for p in parts]
    return DatasetSplit(*graphs)


def union(g: InteractionGraph, extra_edges) -> InteractionGraph:
    extra = np.asarray(extra_edges, dtype=np.int64).reshape(-1, 3)
    return g.with_edges(np.concatenate([g.edge_array, extra], axis=0))
