"""Versioned text formats: observations, hidden states, models, labels, reports.

Every file starts with the line ``spectree-format v1``.  Tabular files then
carry ``#key<TAB>value`` metadata lines, one column-header line and a TSV
body.  Model files carry a single JSON document after the version line.

Observation/state body: one record per (sequence, time step) with columns
``seq``, ``t`` and one integer per node.  With ``#marks k`` the node columns
hold ``k``-character 0/1 strings instead; mark ``j`` is bit ``j`` of the
symbol (little-endian, bit 0 first), see :func:`pack_marks`.

Model JSON layout (all probability tables are lists of conditional
distributions, i.e. column-major)::

    {"format_version": "spectree-format v1",
     "tree": {"nodes": [...], "root": name, "parents": {child: parent}},
     "m": int, "n": int,
     "obs":   {node: [P(x | z=0), ..., P(x | z=m-1)]},
     "trans": {root: [P(next | prev)], other: [[P(next | prev, parent)]]},
     "init":  {root: P(z_1), other: [P(z_1 | parent)]},
     "failed": {node: message}}          # only in partial models
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ThsHmmParams, TreeStructure, validate
from .simulator import IID, SequenceBatch, StateTrace

HEADER = "spectree-format v1"


class FormatError(ValueError):
    """A file does not follow the expected layout."""


# ---------------------------------------------------------------------------
# mark packing


def pack_marks(marks) -> np.ndarray:
    """Pack ``(..., k)`` binary marks into symbols in ``[0, 2^k)``; mark ``j`` is bit ``j``."""
    marks = np.asarray(marks)
    if marks.size and not np.isin(marks, (0, 1)).all():
        raise FormatError("marks must be 0/1")
    weights = 1 << np.arange(marks.shape[-1], dtype=np.int64)
    return (marks.astype(np.int64) * weights).sum(axis=-1)


def unpack_marks(symbols, k: int) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size and (symbols.min() < 0 or symbols.max() >= 1 << k):
        raise FormatError(f"symbols outside [0, 2^{k})")
    return (symbols[..., None] >> np.arange(k, dtype=np.int64)) & 1


# ---------------------------------------------------------------------------
# tabular files


@dataclass
class Table:
    meta: dict
    columns: list
    rows: list = field(default_factory=list)


def _open_text(path):
    fh = open(path)
    first = fh.readline().rstrip("\n")
    if first != HEADER:
        fh.close()
        raise FormatError(f"{path}: expected header line {HEADER!r}, found {first!r}")
    return fh


def read_table(path) -> Table:
    with _open_text(path) as fh:
        meta, columns = {}, None
        body = []
        for line in fh:
            line = line.rstrip("\n")
            if columns is None:
                if line.startswith("#"):
                    key, _, value = line[1:].partition("\t")
                    meta[key] = value
                    continue
                columns = line.split("\t")
                continue
            if line:
                body.append(line)
    if columns is None:
        raise FormatError(f"{path}: missing column header")
    return Table(meta, columns, body)


def write_table(path, meta: dict, columns, rows) -> None:
    """``path`` may also be an open text stream."""
    if hasattr(path, "write"):
        _write_table(path, meta, columns, rows)
        return
    with open(path, "w") as fh:
        _write_table(fh, meta, columns, rows)


def _write_table(fh, meta, columns, rows):
    fh.write(HEADER + "\n")
    for key, value in meta.items():
        fh.write(f"#{key}\t{value}\n")
    fh.write("\t".join(columns) + "\n")
    for row in rows:
        fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_symbols(path, kind, names, arrays, alphabet_key, alphabet, mode, marks=None):
    N, L = arrays[0].shape
    meta = {"kind": kind, "nodes": ",".join(names), alphabet_key: alphabet, "mode": mode,
            "sequences": N, "length": L}
    if marks is not None:
        meta["marks"] = marks
    seq, t = np.divmod(np.arange(N * L), L)
    cols = [seq, t] + [a.reshape(-1) for a in arrays]
    with open(path, "w") as fh:
        fh.write(HEADER + "\n")
        for key, value in meta.items():
            fh.write(f"#{key}\t{value}\n")
        fh.write("\t".join(["seq", "t"] + list(names)) + "\n")
        if marks is None:
            np.savetxt(fh, np.stack(cols, axis=1), fmt="%d", delimiter="\t")
        else:
            bits = [unpack_marks(a.reshape(-1), marks) for a in arrays]
            for i in range(N * L):
                strs = ["".join("1" if b else "0" for b in bm[i]) for bm in bits]
                fh.write(f"{seq[i]}\t{t[i]}\t" + "\t".join(strs) + "\n")


def _read_symbols(path, kind):
    with _open_text(path) as fh:
        meta = {}
        line = fh.readline()
        while line.startswith("#"):
            key, _, value = line[1:].rstrip("\n").partition("\t")
            meta[key] = value
            line = fh.readline()
        columns = line.rstrip("\n").split("\t")
        if meta.get("kind") != kind:
            raise FormatError(f"{path}: expected a {kind} file, found kind={meta.get('kind')!r}")
        names = meta["nodes"].split(",") if meta.get("nodes") else []
        if columns[:2] != ["seq", "t"]:
            raise FormatError(f"{path}: first columns must be seq and t")
        for name in names:
            if name not in columns:
                raise FormatError(f"{path}: missing column for node {name!r}")
        marks = int(meta["marks"]) if "marks" in meta else None
        with warnings.catch_warnings():
            # an empty body is reported below with a clearer message
            warnings.simplefilter("ignore", UserWarning)
            raw = np.loadtxt(fh, dtype=np.int64 if marks is None else str,
                             delimiter="\t", ndmin=2)
        if marks is None:
            body = raw
        else:
            body = np.zeros(raw.shape, dtype=np.int64)
            if raw.size:
                body[:, :2] = raw[:, :2].astype(np.int64)
                for j in range(2, raw.shape[1]):
                    bits = np.array([[c == "1" for c in s] for s in raw[:, j]], dtype=np.int64)
                    if bits.shape[1] != marks:
                        raise FormatError(f"{path}: mark strings must have {marks} characters")
                    body[:, j] = pack_marks(bits)
    N = int(meta.get("sequences", 0))
    L = int(meta.get("length", 0))
    if body.size == 0 or N * L == 0:
        raise FormatError(f"{path}: no records")
    if body.shape != (N * L, len(columns)):
        raise FormatError(f"{path}: expected {N * L} records of {len(columns)} fields, "
                          f"found shape {body.shape}")
    order = np.lexsort((body[:, 1], body[:, 0]))
    body = body[order]
    arrays = {name: body[:, columns.index(name)].reshape(N, L) for name in names}
    return meta, names, arrays


def write_observations(path, batch: SequenceBatch, names, marks: Optional[int] = None) -> None:
    if marks is not None and batch.n != 1 << marks:
        raise FormatError(f"n={batch.n} is not 2^{marks}")
    _write_symbols(path, "observations", names, batch.symbols, "n", batch.n, batch.mode, marks)


def read_observations(path, node_order=None):
    """Return ``(batch, names)``; ``node_order`` selects and orders node columns by name."""
    meta, names, arrays = _read_symbols(path, "observations")
    if node_order is not None:
        for name in node_order:
            if name not in arrays:
                raise FormatError(f"{path}: observations have no column for node {name!r}")
        names = list(node_order)
    mode = meta.get("mode", IID)
    try:
        batch = SequenceBatch([arrays[name] for name in names], int(meta["n"]), mode)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return batch, names


def write_states(path, trace: StateTrace, names, mode: str = IID) -> None:
    _write_symbols(path, "states", names, trace.states, "m", trace.m, mode)


def read_states(path, node_order=None):
    meta, names, arrays = _read_symbols(path, "states")
    names = list(node_order) if node_order is not None else names
    for name in names:
        if name not in arrays:
            raise FormatError(f"{path}: states have no column for node {name!r}")
    return StateTrace([arrays[name] for name in names], int(meta["m"])), names


# ---------------------------------------------------------------------------
# models


def model_to_dict(params: ThsHmmParams, tree: TreeStructure, failed: Optional[dict] = None) -> dict:
    names = [tree.label(u) for u in range(tree.size)]
    doc = {
        "format_version": HEADER,
        "tree": {"nodes": names, "root": names[tree.root],
                 "parents": {names[u]: names[tree.parent(u)] for u in range(tree.size)
                             if u != tree.root}},
        "m": int(params.m), "n": int(params.n), "obs": {}, "trans": {}, "init": {},
    }
    for u, name in enumerate(names):
        if params.obs[u] is not None:
            doc["obs"][name] = params.obs[u].T.tolist()
        if params.trans[u] is not None:
            T = params.trans[u]
            doc["trans"][name] = T.T.tolist() if u == tree.root else T.transpose(1, 2, 0).tolist()
        if params.init[u] is not None:
            W = params.init[u]
            doc["init"][name] = W.tolist() if u == tree.root else W.T.tolist()
    if failed:
        doc["failed"] = {names[u]: msg for u, msg in failed.items()}
    return doc


def model_from_dict(doc: dict, check: bool = True):
    """Return ``(params, tree, failed)``; missing per-node entries become ``None``."""
    if doc.get("format_version") != HEADER:
        raise FormatError(f"unsupported model format {doc.get('format_version')!r}")
    try:
        names = list(doc["tree"]["nodes"])
        parents_by_name = doc["tree"]["parents"]
        root = doc["tree"]["root"]
        parents = []
        for name in names:
            if name == root:
                parents.append(-1)
            elif name in parents_by_name:
                parents.append(names.index(parents_by_name[name]))
            else:
                raise FormatError(f"node {name!r} has no parent entry")
        tree = TreeStructure(tuple(parents), tuple(names))
        m, n = int(doc["m"]), int(doc["n"])
        obs, trans, init = [], [], []
        for u, name in enumerate(names):
            O = doc["obs"].get(name)
            obs.append(None if O is None else np.asarray(O, dtype=float).T.copy())
            T = doc["trans"].get(name)
            if T is None:
                trans.append(None)
            else:
                T = np.asarray(T, dtype=float)
                trans.append(T.T.copy() if u == tree.root else T.transpose(2, 0, 1).copy())
            W = doc["init"].get(name)
            if W is None:
                init.append(None)
            else:
                W = np.asarray(W, dtype=float)
                init.append(W.copy() if u == tree.root else W.T.copy())
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed model document: {exc}") from None
    params = ThsHmmParams(m, n, obs, trans, init)
    failed = {names.index(k): v for k, v in doc.get("failed", {}).items()}
    if check and not failed:
        problems = validate(params, tree)
        if problems:
            raise FormatError("model fails validation: " + "; ".join(str(p) for p in problems[:5]))
    return params, tree, failed


def write_model(path, params: ThsHmmParams, tree: TreeStructure, failed: Optional[dict] = None) -> None:
    with open(path, "w") as fh:
        fh.write(HEADER + "\n")
        json.dump(model_to_dict(params, tree, failed), fh, indent=1)
        fh.write("\n")


def read_model(path, check: bool = True):
    with _open_text(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not a model document ({exc})") from None
    return model_from_dict(doc, check)


def sniff_kind(path) -> str:
    """``model`` or the ``#kind`` of a tabular file."""
    with _open_text(path) as fh:
        line = fh.readline()
    if line.lstrip().startswith("{"):
        return "model"
    if line.startswith("#kind\t"):
        return line.rstrip("\n").split("\t", 1)[1]
    raise FormatError(f"{path}: cannot determine file kind")


# ---------------------------------------------------------------------------
# decoded labels


def write_labels(path, trace, names, posteriors: bool = False) -> None:
    """One row per (node, seq, t): argmax state and its posterior, optionally all posteriors."""
    m = next(iter(trace.posteriors.values())).shape[-1]
    columns = ["node", "seq", "t", "state", "max_posterior"]
    if posteriors:
        columns += [f"p{k}" for k in range(m)]
    with open(path, "w") as fh:
        fh.write(HEADER + "\n#kind\tlabels\n")
        fh.write(f"#m\t{m}\n#nodes\t{','.join(names)}\n")
        fh.write("\t".join(columns) + "\n")
        for u in sorted(trace.labels):
            post = trace.posteriors[u]
            N, L = trace.labels[u].shape
            seq, t = np.divmod(np.arange(N * L), L)
            cols = [seq, t, trace.labels[u].reshape(-1), post.max(axis=-1).reshape(-1)]
            fmt = names[u].replace("%", "%%") + "\t%d\t%d\t%d\t%.17g"
            if posteriors:
                cols += list(post.reshape(-1, m).T)
                fmt += "\t%.17g" * m
            np.savetxt(fh, np.column_stack(cols), fmt=fmt)


def read_labels(path) -> dict:
    """``{node name: (N, L) int labels}`` from a label file."""
    table = read_table(path)
    if table.meta.get("kind") != "labels":
        raise FormatError(f"{path}: not a label file")
    if not table.rows:
        raise FormatError(f"{path}: no records")
    ci = {c: i for i, c in enumerate(table.columns)}
    by_node = {}
    for line in table.rows:
        f = line.split("\t")
        by_node.setdefault(f[ci["node"]], []).append((int(f[ci["seq"]]), int(f[ci["t"]]),
                                                      int(f[ci["state"]])))
    out = {}
    for name, recs in by_node.items():
        a = np.array(recs, dtype=np.int64)
        N, L = a[:, 0].max() + 1, a[:, 1].max() + 1
        if N * L != len(a):
            raise FormatError(f"{path}: node {name!r} has an incomplete (seq, t) grid")
        lab = np.empty((N, L), dtype=np.int64)
        lab[a[:, 0], a[:, 1]] = a[:, 2]
        out[name] = lab
    return out


# ---------------------------------------------------------------------------
# reports


RANK_COLUMNS = ["node", "path", "sigma_obs", "sigma_pair", "sigma_path", "threshold",
                "node_pass", "path_pass"]


def rank_rows(report, tree):
    for u in sorted(report.sigma_obs):
        path = ",".join(tree.label(v) for v in report.paths[u])
        yield [tree.label(u), path, report.sigma_obs[u], report.sigma_pair[u],
               report.sigma_path[u], report.threshold, int(report.node_pass(u)),
               int(report.path_pass(u))]


def write_rank_report(path, report, tree) -> None:
    write_table(path, {"kind": "rank-report", "ok": int(report.ok)}, RANK_COLUMNS,
                rank_rows(report, tree))


CURVE_COLUMNS = ["N", "node", "trials", "failures", "median", "q25", "q75", "min", "max"]


def write_curve(path, curve, tree, metric: str = "fro") -> None:
    """Consistency curve table, one row per (N, node); quantiles of the aligned error."""
    rows = []
    for r in curve.rows:
        e = r.errors
        rows.append([r.N, tree.label(r.node), len(e) + r.failures, r.failures, r.median,
                     r.quantile(0.25), r.quantile(0.75),
                     float(np.min(e)) if e else float("nan"), float(np.max(e)) if e else float("nan")])
    write_table(path, {"kind": "consistency", "metric": metric}, CURVE_COLUMNS, rows)


MODEL_EVAL_COLUMNS = ["node", "perm", "error_op", "error_fro", "obs_max", "trans_max", "init_max"]
F1_EVAL_COLUMNS = ["node", "state", "precision", "recall", "f1", "tp", "fp", "fn", "accuracy"]
