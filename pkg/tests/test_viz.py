import xml.etree.ElementTree as ET

import numpy as np
import pytest

from esv.errors import InputShapeError, RenderInputError
from esv.explanation import Explanation
from esv.viz import (
    NEGATIVE_COLOR,
    POSITIVE_COLOR,
    ForcePlotSpec,
    StackPlotSpec,
    average_linkage,
    order_by_similarity,
    render_force_plot,
    render_stack_plot,
)

SVG = "{http://www.w3.org/2000/svg}"


def _segments(root):
    out = []
    for g in root.iter(SVG + "g"):
        if g.get("class", "").startswith("segment"):
            rect = g.find(SVG + "rect")
            out.append((g.get("class").split()[1], int(g.get("data-feature")),
                        float(rect.get("x")), float(rect.get("width")), rect.get("fill")))
    return out


def _marker(root, cls):
    for g in root.iter(SVG + "g"):
        if g.get("class") == cls:
            return float(g.get("data-px"))
    raise AssertionError(cls)


def test_force_layout_example():
    e = Explanation(0.1, [0.25, -0.05], "exact", 4, 0)
    root = ET.fromstring(render_force_plot(ForcePlotSpec(e, scale=200.0, origin=100.0)))
    segs = {s[0]: s for s in _segments(root)}
    assert segs["positive"][3] == pytest.approx(0.25 * 200, abs=0.5)
    assert segs["negative"][3] == pytest.approx(0.05 * 200, abs=0.5)
    assert segs["positive"][4] == POSITIVE_COLOR and segs["negative"][4] == NEGATIVE_COLOR
    assert _marker(root, "output-value") - 100.0 == pytest.approx(0.30 * 200, abs=0.5)
    assert _marker(root, "output-value") - _marker(root, "base-value") == pytest.approx(0.2 * 200, abs=0.5)


def test_force_all_zero():
    e = Explanation(0.7, [0.0, 0.0, 0.0], "exact", 8, 0)
    root = ET.fromstring(render_force_plot(ForcePlotSpec(e)))
    assert _segments(root) == []
    assert _marker(root, "output-value") == _marker(root, "base-value")


def test_force_max_example():
    e = Explanation(0.0, [0.5, 2.5], "exact", 4, 0)
    segs = _segments(ET.fromstring(render_force_plot(ForcePlotSpec(e))))
    assert [s[0] for s in segs] == ["positive", "positive"]
    widths = {s[1]: s[3] for s in segs}
    assert widths[1] / widths[0] == pytest.approx(5.0, rel=1e-3)


def test_force_segments_meet_at_output():
    rng = np.random.default_rng(3)
    e = Explanation(rng.normal(), rng.normal(size=9), "exact", 0, 0)
    root = ET.fromstring(render_force_plot(ForcePlotSpec(e)))
    out = _marker(root, "output-value")
    pos = [s for s in _segments(root) if s[0] == "positive"]
    neg = [s for s in _segments(root) if s[0] == "negative"]
    assert max(s[2] + s[3] for s in pos) == pytest.approx(out, abs=1e-3)
    assert min(s[2] for s in neg) == pytest.approx(out, abs=1e-3)


def test_force_labels_and_escaping():
    e = Explanation(0.0, [1.0, -1.0], "exact", 4, 0, ["a<b", "c&d"])
    text = render_force_plot(ForcePlotSpec(e, feature_values=[3.0, 4.5]))
    root = ET.fromstring(text)
    labels = sorted(t.text for t in root.iter(SVG + "text") if t.get("class") == "label")
    assert labels == ["a<b = 3", "c&d = 4.5"]


def test_force_errors():
    with pytest.raises(RenderInputError):
        render_force_plot(ForcePlotSpec(Explanation(0.0, [np.nan], "exact", 2, 0)))
    with pytest.raises(RenderInputError):
        render_force_plot(ForcePlotSpec(Explanation(0.0, [1.0], "exact", 2, 0), scale=-1))
    with pytest.raises(InputShapeError):
        render_force_plot(ForcePlotSpec(Explanation(0.0, [1.0], "exact", 2, 0), feature_names=["a", "b"]))


def _exps(rows):
    return [Explanation(0.0, r, "exact", 0, 0) for r in rows]


def test_order_identical_is_identity():
    assert order_by_similarity(_exps([[1.0, 2.0]] * 5)) == [0, 1, 2, 3, 4]
    assert order_by_similarity(_exps([[1.0]])) == [0]


def test_order_two_clusters_contiguous():
    rows = [[0, 0], [5, 5], [0, 0], [5, 5], [0, 0.01], [5.01, 5]]
    order = order_by_similarity(_exps(rows))
    assert sorted(order) == list(range(6))
    labels = [rows[i][0] > 2 for i in order]
    assert labels in ([False] * 3 + [True] * 3, [True] * 3 + [False] * 3)


def test_order_errors():
    with pytest.raises(InputShapeError):
        order_by_similarity(_exps([[1.0], [1.0, 2.0]]))
    with pytest.raises(InputShapeError):
        order_by_similarity([])


def test_average_linkage_matches_scipy():
    from scipy.cluster.hierarchy import linkage

    rng = np.random.default_rng(5)
    X = rng.normal(size=(12, 3))
    ours = sorted(d for _, _, d in average_linkage(X))
    ref = sorted(linkage(X, method="average")[:, 2])
    np.testing.assert_allclose(ours, ref, rtol=1e-12)


def test_stack_columns():
    exps = _exps([[1.0, -0.5], [1.0, -0.5], [1.0, -0.5]])
    root = ET.fromstring(render_stack_plot(StackPlotSpec(exps)))
    cols = [g for g in root.iter(SVG + "g") if g.get("class") == "column"]
    assert len(cols) == 3
    heights = [[r.get("height") for r in c.iter(SVG + "rect")] for c in cols]
    assert heights[0] == heights[1] == heights[2]
    assert [c.get("data-index") for c in cols] == ["0", "1", "2"]


def test_stack_order_respected():
    exps = _exps([[1.0], [2.0], [3.0]])
    root = ET.fromstring(render_stack_plot(StackPlotSpec(exps, order=[2, 0, 1])))
    cols = [g.get("data-index") for g in root.iter(SVG + "g") if g.get("class") == "column"]
    assert cols == ["2", "0", "1"]
    with pytest.raises(InputShapeError):
        render_stack_plot(StackPlotSpec(exps, order=[0, 0, 1]))


def test_stack_single_is_rotated_force():
    e = Explanation(0.2, [0.6, -0.1, 0.3], "exact", 0, 0)
    stack = ET.fromstring(render_stack_plot(StackPlotSpec([e], scale=100.0)))
    force = ET.fromstring(render_force_plot(ForcePlotSpec(e, scale=100.0)))
    heights = sorted(float(r.get("height")) for r in stack.iter(SVG + "rect") if "segment" in r.get("class", ""))
    widths = sorted(s[3] for s in _segments(force))
    np.testing.assert_allclose(heights, widths, atol=1e-3)
