"""Feature masking and the expected-value set function.

A coalition ``z`` is a boolean vector over the ``M`` interpretable features
(groups of original columns). :func:`compose` builds a model input that takes
the explained instance's values for present groups and a background row's
values for absent ones. :class:`SetFunctionCache` averages the model over the
background set to give ``v(z)``, the expected output when only the features in
``z`` are known, and memoizes every value it computes.
"""

import csv
import json
import threading

import numpy as np

from .errors import InputDomainError, InputShapeError, ModelParseError
from .models import check_matrix

__all__ = [
    "FeatureGrouping",
    "compose",
    "SetFunction",
    "SetFunctionCache",
    "TableSetFunction",
    "all_coalitions",
    "background_mean",
    "coalition_key",
    "load_table",
    "load_grouping",
]

# composed rows evaluated per model call
_CHUNK_ROWS = 1 << 16


class FeatureGrouping:
    """Partition of original feature indices ``0..P-1`` into ``M`` groups."""

    def __init__(self, groups, n_features=None, names=None):
        groups = [tuple(int(i) for i in g) for g in groups]
        flat = [i for g in groups for i in g]
        if n_features is None:
            n_features = len(flat)
        if any(len(g) == 0 for g in groups):
            raise InputShapeError("groups must be non-empty")
        if sorted(flat) != list(range(n_features)):
            raise InputShapeError(
                f"groups must cover feature indices 0..{n_features - 1} exactly once"
            )
        self.groups = tuple(groups)
        self.n_features = n_features
        self.group_of = np.empty(n_features, dtype=np.int64)
        for gi, g in enumerate(groups):
            self.group_of[list(g)] = gi
        self.group_of.setflags(write=False)
        self.names = None if names is None else list(names)

    @classmethod
    def singletons(cls, n_features):
        return cls([[i] for i in range(n_features)], n_features)

    @property
    def n_groups(self):
        return len(self.groups)

    def group_names(self, feature_names):
        """Name each group by joining its members' names with ``+``."""
        if self.names is not None:
            return list(self.names)
        return ["+".join(feature_names[i] for i in g) for g in self.groups]

    def expand(self, Z):
        """Map coalition rows over groups to boolean masks over original features."""
        Z = np.asarray(Z, dtype=bool)
        return Z[..., self.group_of]

    def __eq__(self, other):
        return isinstance(other, FeatureGrouping) and self.groups == other.groups

    def __repr__(self):
        return f"FeatureGrouping({[list(g) for g in self.groups]})"


def _as_coalition(z, M):
    z = np.asarray(z)
    if z.ndim != 1 or z.size != M:
        raise InputShapeError(f"coalition must have length {M}, got shape {z.shape}")
    if not np.isin(z, (0, 1)).all():
        raise InputDomainError("coalition entries must be 0 or 1")
    return z.astype(bool)


def compose(x, z, b, grouping=None):
    """Take ``x`` where the group's bit in ``z`` is set and ``b`` elsewhere."""
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if x.ndim != 1 or b.shape != x.shape:
        raise InputShapeError(f"instance and background shapes differ: {x.shape} vs {b.shape}")
    if grouping is None:
        grouping = FeatureGrouping.singletons(x.size)
    if grouping.n_features != x.size:
        raise InputShapeError(f"grouping covers {grouping.n_features} features, input has {x.size}")
    z = _as_coalition(z, grouping.n_groups)
    return np.where(grouping.expand(z), x, b)


def coalition_key(z):
    return np.packbits(np.asarray(z, dtype=bool)).tobytes()


def all_coalitions(M):
    """All ``2**M`` coalitions; row ``k`` has bit ``i`` set iff ``k >> i & 1``."""
    k = np.arange(2**M, dtype=np.int64)
    return ((k[:, None] >> np.arange(M)) & 1).astype(bool)


class SetFunction:
    """Memoizing base for set functions over ``M`` players.

    Subclasses implement ``_compute(Z)`` returning one value per row of the
    boolean matrix ``Z``. Values are computed once and then read from the
    memo; concurrent callers may race to fill the same entry, which is benign
    because recomputation is deterministic.
    """

    def __init__(self, n_players):
        if n_players < 1:
            raise InputShapeError("a set function needs at least one player")
        self.n_players = int(n_players)
        self._memo = {}
        self._lock = threading.Lock()
        self.n_evaluations = 0

    @property
    def M(self):
        return self.n_players

    def _compute(self, Z):
        raise NotImplementedError

    def value(self, z):
        """``v(z)`` for a single coalition."""
        z = _as_coalition(z, self.n_players)
        key = coalition_key(z)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        val = float(self._compute(z[None, :])[0])
        with self._lock:
            if key not in self._memo:
                self.n_evaluations += 1
                self._memo[key] = val
        return self._memo[key]

    def values(self, Z):
        """``v`` for every row of ``Z``; missing rows are computed in one batch."""
        Z = np.asarray(Z, dtype=bool)
        if Z.ndim != 2 or Z.shape[1] != self.n_players:
            raise InputShapeError(f"expected coalition rows of length {self.n_players}")
        packed = np.packbits(Z, axis=1)
        keys = [row.tobytes() for row in packed]
        out = np.empty(len(keys))
        missing = {}
        for i, key in enumerate(keys):
            hit = self._memo.get(key)
            if hit is None:
                missing.setdefault(key, []).append(i)
            else:
                out[i] = hit
        if missing:
            first = [rows[0] for rows in missing.values()]
            computed = self._compute(Z[first])
            with self._lock:
                for (key, rows), val in zip(missing.items(), computed):
                    val = float(val)
                    if key not in self._memo:
                        self.n_evaluations += 1
                        self._memo[key] = val
                    out[rows] = self._memo[key]
        return out

    @property
    def full_value(self):
        return self.value(np.ones(self.n_players, dtype=bool))

    @property
    def empty_value(self):
        return self.value(np.zeros(self.n_players, dtype=bool))

    @property
    def cached_count(self):
        return len(self._memo)


def background_mean(preds):
    """Row means of ``preds`` (shape ``(n, K)``), exact when a row is constant.

    Averaging is done relative to the first column, so identical predictions
    average to that prediction bit for bit. This keeps ``v(full) == f(x)``
    and makes a feature the model ignores contribute exactly zero.
    """
    first = preds[:, :1]
    return first[:, 0] + (preds - first).mean(axis=1)


class SetFunctionCache(SetFunction):
    """Expected model output with masked features drawn from a background set.

    Parameters
    ----------
    model : Model
        The black box being explained.
    x : array-like of shape (P,)
        The instance whose prediction is explained.
    background : array-like of shape (K, P)
        Rows used to fill in absent features; each is weighted ``1/K``.
    grouping : FeatureGrouping, optional
        Defaults to one group per original feature.
    """

    def __init__(self, model, x, background, grouping=None):
        P = model.n_features
        x = check_matrix(x, P)
        if x.shape[0] != 1:
            raise InputShapeError("the explained instance must be a single row")
        self.x = x[0]
        self.background = check_matrix(background, P)
        if self.background.shape[0] < 1:
            raise InputShapeError("background set must contain at least one row")
        if grouping is None:
            grouping = FeatureGrouping.singletons(P)
        if grouping.n_features != P:
            raise InputShapeError(f"grouping covers {grouping.n_features} features, model has {P}")
        self.model = model
        self.grouping = grouping
        self.x.setflags(write=False)
        self.background.setflags(write=False)
        super().__init__(grouping.n_groups)

    def _compute(self, Z):
        K, P = self.background.shape
        out = np.empty(Z.shape[0])
        step = max(1, _CHUNK_ROWS // K)
        for start in range(0, Z.shape[0], step):
            mask = self.grouping.expand(Z[start:start + step])
            composed = np.where(mask[:, None, :], self.x, self.background[None, :, :])
            preds = self.model.predict(composed.reshape(-1, P)).reshape(mask.shape[0], K)
            out[start:start + step] = background_mean(preds)
        return out


class TableSetFunction(SetFunction):
    """Set function given explicitly as ``2**M`` values indexed by bitmask.

    Entry ``table[k]`` is the value of the coalition whose bit ``i`` is
    ``(k >> i) & 1``. Useful for constructing games with prescribed
    structure, such as symmetric or dominated games.
    """

    def __init__(self, table):
        table = np.array(table, dtype=float)
        M = int(round(np.log2(table.size)))
        if table.ndim != 1 or 2**M != table.size:
            raise InputShapeError("table length must be a power of two")
        table.setflags(write=False)
        self.table = table
        self._powers = 1 << np.arange(M, dtype=np.int64)
        super().__init__(M)

    def _compute(self, Z):
        return self.table[Z.astype(np.int64) @ self._powers]


def load_table(path):
    """Read a CSV with a header row; returns ``(names, array of shape (n, P))``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ModelParseError("file is empty", str(path)) from None
        names = [n.strip() for n in names]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(names):
                raise ModelParseError(
                    f"expected {len(names)} fields, got {len(row)}", f"{path}: line {lineno}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ModelParseError(str(exc), f"{path}: line {lineno}") from None
    data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    if not np.all(np.isfinite(data)):
        raise InputDomainError(f"{path}: data contains non-finite values")
    return names, data


def load_grouping(path, n_features):
    """Read ``{"groups": [[int, ...], ...]}`` (optionally with ``"names"``)."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelParseError(exc.msg, f"{path}: line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("groups"), list):
        raise ModelParseError("expected an object with a 'groups' list", str(path))
    groups = doc["groups"]
    for i, g in enumerate(groups):
        if not isinstance(g, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in g):
            raise ModelParseError("each group must be a list of integers", f"{path}: groups[{i}]")
    try:
        return FeatureGrouping(groups, n_features, names=doc.get("names"))
    except InputShapeError as exc:
        raise ModelParseError(str(exc), str(path)) from None
