"""Static SVG renderings of explanations.

``render_force_plot`` draws one prediction as a horizontal bar: attributions
that raise the output are red and sit left of the output marker, those that
lower it are blue and sit to its right, so the output is where the two
"forces" meet. ``render_stack_plot`` rotates that bar to a vertical column
and places many explanations side by side, usually in the order returned by
``order_by_similarity``.
"""

from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .errors import InputShapeError, RenderInputError

__all__ = [
    "POSITIVE_COLOR",
    "NEGATIVE_COLOR",
    "ForcePlotSpec",
    "StackPlotSpec",
    "render_force_plot",
    "render_stack_plot",
    "order_by_similarity",
    "average_linkage",
]

POSITIVE_COLOR = "#ff0d57"
NEGATIVE_COLOR = "#1e88e5"
MARGIN = 40.0
FONT = "font-family='Arial, Helvetica, sans-serif'"


def _fmt(v):
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _label_value(v):
    return f"{v:.4g}"


def _check_finite(explanation):
    if not np.isfinite(explanation.base_value) or not np.all(np.isfinite(explanation.phi)):
        raise RenderInputError("explanation contains non-finite values")


def _segments(phi):
    """Ordered segment layout around the output value.

    Returns ``(index, start_offset, end_offset)`` triples in value units
    relative to the output: positives occupy ``[-P, 0]`` with the largest
    next to the output, negatives ``[0, N]`` likewise.
    """
    order = sorted(range(len(phi)), key=lambda i: (phi[i] <= 0, -abs(phi[i]), i))
    out = []
    pos_edge = neg_edge = 0.0
    for i in order:
        v = phi[i]
        if v > 0:
            out.append((i, pos_edge - v, pos_edge))
            pos_edge -= v
        elif v < 0:
            out.append((i, neg_edge, neg_edge - v))
            neg_edge -= v
    return out, -pos_edge, neg_edge


def _value_range(explanations):
    lo, hi = np.inf, -np.inf
    for e in explanations:
        _, pos, neg = _segments(e.phi)
        f = e.output
        lo = min(lo, e.base_value, f - pos)
        hi = max(hi, e.base_value, f + neg)
    return lo, hi


@dataclass
class ForcePlotSpec:
    """Layout of a single force plot.

    ``scale`` is pixels per output unit and ``origin`` the pixel column of
    output value 0; both are fitted to the canvas when left as ``None``.
    ``feature_values``, when given, are shown in segment labels in place of
    the attribution.
    """

    explanation: object
    feature_names: list = None
    feature_values: list = None
    width: int = 900
    height: int = 120
    scale: float = None
    origin: float = None

    def resolved(self):
        e = self.explanation
        _check_finite(e)
        scale, origin = self.scale, self.origin
        lo, hi = _value_range([e])
        if scale is None:
            span = hi - lo
            scale = (self.width - 2 * MARGIN) / span if span > 0 else 100.0
        if not scale > 0:
            raise RenderInputError("scale must be positive")
        if origin is None:
            origin = MARGIN - lo * scale if hi > lo else self.width / 2 - e.base_value * scale
        names = self.feature_names or e.names()
        if len(names) != e.M:
            raise InputShapeError(f"{len(names)} names for {e.M} features")
        return scale, origin, list(names)


def _svg_open(width, height, cls):
    return [
        "<?xml version='1.0' encoding='UTF-8'?>",
        f"<svg xmlns='http://www.w3.org/2000/svg' version='1.1' class='{cls}' "
        f"width='{width}' height='{height}' viewBox='0 0 {width} {height}'>",
        f"<rect class='background' x='0' y='0' width='{width}' height='{height}' fill='white'/>",
    ]


def render_force_plot(spec):
    """Render ``spec`` as an SVG document string."""
    e = spec.explanation
    scale, origin, names = spec.resolved()
    values = spec.feature_values
    px = lambda v: origin + scale * v  # noqa: E731
    bar_y, bar_h = spec.height * 0.35, spec.height * 0.25
    f = e.output
    segs, _, _ = _segments(e.phi)

    parts = _svg_open(spec.width, spec.height, "force-plot")
    parts.append(f"<line class='axis' x1='0' x2='{spec.width}' y1='{_fmt(bar_y + bar_h)}' "
                 f"y2='{_fmt(bar_y + bar_h)}' stroke='#cccccc'/>")
    parts.append(f"<g class='axis-origin' data-px='{_fmt(origin)}'/>")
    for i, start, end in segs:
        phi = e.phi[i]
        x0, x1 = px(f + start), px(f + end)
        color = POSITIVE_COLOR if phi > 0 else NEGATIVE_COLOR
        sign = "positive" if phi > 0 else "negative"
        shown = values[i] if values is not None else phi
        label = f"{names[i]} = {_label_value(shown)}"
        parts.append(
            f"<g class='segment {sign}' data-feature='{i}' data-phi='{float(phi)!r}'>"
            f"<rect x='{_fmt(x0)}' y='{_fmt(bar_y)}' width='{_fmt(x1 - x0)}' "
            f"height='{_fmt(bar_h)}' fill='{color}' stroke='white' stroke-width='0.5'/>"
            f"<text class='label' x='{_fmt((x0 + x1) / 2)}' y='{_fmt(bar_y + bar_h + 16)}' "
            f"text-anchor='middle' font-size='11' fill='{color}' {FONT}>{escape(label)}</text>"
            f"</g>"
        )
    for cls, value, text, stroke in (
        ("base-value", e.base_value, "base value", "stroke-width='1' stroke-dasharray='3,2'"),
        ("output-value", f, "output", "stroke-width='2'"),
    ):
        x = _fmt(px(value))
        parts.append(
            f"<g class='{cls}' data-value='{float(value)!r}' data-px='{x}'>"
            f"<line x1='{x}' x2='{x}' y1='{_fmt(bar_y - 14)}' y2='{_fmt(bar_y + bar_h)}' "
            f"stroke='#333333' {stroke}/>"
            f"<text x='{x}' y='{_fmt(bar_y - 18)}' text-anchor='middle' font-size='12' {FONT}>"
            f"{escape(text)} {_label_value(value)}</text></g>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- similarity ordering ---------------------------------------------------


def average_linkage(X):
    """Average-linkage agglomerative clustering on Euclidean distances.

    Returns a list of merges ``(a, b, distance)`` where ``a`` and ``b`` are
    the smallest original indices of the two merged clusters (``a < b``).
    Among equally close pairs the one with the smallest ``(a, b)`` merges
    first, which makes the result independent of floating-point tie order.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    D = np.sqrt(np.maximum(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2), 0.0))
    D[np.tril_indices(n)] = np.inf
    size = np.ones(n)
    merges = []
    for _ in range(n - 1):
        k = int(np.argmin(D))
        a, b = divmod(k, n)
        merges.append((a, b, float(D[a, b])))
        # slot a keeps the merged cluster, so its smallest index stays a
        full = np.minimum(D, D.T)
        new = (size[a] * full[a] + size[b] * full[b]) / (size[a] + size[b])
        size[a] += size[b]
        D[b, :] = np.inf
        D[:, b] = np.inf
        D[a, a + 1:] = new[a + 1:]
        D[:a, a] = new[:a]
    return merges


def order_by_similarity(explanations):
    """Leaf order of the average-linkage dendrogram of the attribution vectors.

    Within each merge the cluster holding the smaller original index is
    placed first, so identical explanations keep their input order.
    """
    explanations = list(explanations)
    if not explanations:
        raise InputShapeError("need at least one explanation")
    M = explanations[0].M
    if any(e.M != M for e in explanations):
        raise InputShapeError("explanations have different numbers of features")
    n = len(explanations)
    leaves = {i: [i] for i in range(n)}
    for a, b, _ in average_linkage(np.array([e.phi for e in explanations])):
        leaves[a] = leaves[a] + leaves.pop(b)
    return leaves[0]


# -- stacked plot ----------------------------------------------------------


@dataclass
class StackPlotSpec:
    """Layout of a stacked plot: one vertical force column per explanation.

    ``order`` lists explanation indices from left to right (identity when
    ``None``). ``scale`` is pixels per output unit, shared by all columns.
    """

    explanations: list
    order: list = None
    column_width: float = None
    width: int = 900
    height: int = 350
    scale: float = None

    def resolved(self):
        exps = list(self.explanations)
        if not exps:
            raise InputShapeError("need at least one explanation")
        M = exps[0].M
        for e in exps:
            if e.M != M:
                raise InputShapeError("explanations have different numbers of features")
            _check_finite(e)
        order = list(range(len(exps))) if self.order is None else [int(i) for i in self.order]
        if sorted(order) != list(range(len(exps))):
            raise InputShapeError("order must be a permutation of the explanation indices")
        col_w = self.column_width or (self.width - 2 * MARGIN) / len(exps)
        lo, hi = _value_range(exps)
        scale = self.scale
        if scale is None:
            scale = (self.height - 2 * MARGIN) / (hi - lo) if hi > lo else 100.0
        if not scale > 0:
            raise RenderInputError("scale must be positive")
        origin = (self.height - MARGIN + lo * scale) if hi > lo else self.height / 2 + exps[0].base_value * scale
        return exps, order, col_w, scale, origin


def render_stack_plot(spec):
    """Render ``spec`` as an SVG document string."""
    exps, order, col_w, scale, origin = spec.resolved()
    py = lambda v: origin - scale * v  # noqa: E731
    width = max(spec.width, int(np.ceil(2 * MARGIN + col_w * len(exps))))
    parts = _svg_open(width, spec.height, "stack-plot")
    outputs = []
    for pos, idx in enumerate(order):
        e = exps[idx]
        x = MARGIN + pos * col_w
        f = e.output
        segs, _, _ = _segments(e.phi)
        names = e.names()
        parts.append(f"<g class='column' data-index='{idx}' data-position='{pos}'>")
        for i, start, end in segs:
            phi = e.phi[i]
            top, bottom = py(f + end), py(f + start)
            color = POSITIVE_COLOR if phi > 0 else NEGATIVE_COLOR
            parts.append(
                f"<rect class='segment {'positive' if phi > 0 else 'negative'}' data-feature='{i}' "
                f"data-phi='{float(phi)!r}' x='{_fmt(x)}' y='{_fmt(top)}' width='{_fmt(col_w)}' "
                f"height='{_fmt(bottom - top)}' fill='{color}'>"
                f"<title>{escape(f'{names[i]} = {_label_value(phi)}')}</title></rect>"
            )
        parts.append(f"<line class='base-value' x1='{_fmt(x)}' x2='{_fmt(x + col_w)}' "
                     f"y1='{_fmt(py(e.base_value))}' y2='{_fmt(py(e.base_value))}' "
                     f"stroke='#777777' stroke-width='0.5'/>")
        parts.append("</g>")
        outputs.append(f"{_fmt(x + col_w / 2)},{_fmt(py(f))}")
    parts.append(f"<polyline class='output-value' points={quoteattr(' '.join(outputs))} "
                 f"fill='none' stroke='#333333' stroke-width='1'/>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
