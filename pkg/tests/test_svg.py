import numpy as np

import hawkeslim as hl


def _sample_figure():
    fig = hl.Figure(title="limit <path>", xlabel="t", ylabel="value")
    t = np.linspace(0.0, 1.0, 20)
    fig.add_line(t, 2.0 * t, label="limit & path")
    fig.add_scatter([0.25, 0.5], [0.5, 1.0], label="probes")
    return fig


def test_render_is_deterministic():
    a = hl.render(_sample_figure())
    b = hl.render(_sample_figure())
    assert a == b
    assert a.startswith("<?xml") or a.startswith("<svg")
    assert "<svg" in a and "</svg>" in a


def test_render_escapes_markup():
    text = hl.render(_sample_figure())
    assert "limit &lt;path&gt;" in text
    assert "limit &amp; path" in text


def test_timestamp_flag_changes_output_only_when_set():
    fig = _sample_figure()
    plain = hl.render(fig)
    assert "generated" not in plain
    stamped = hl.render(fig, include_timestamp=True)
    assert stamped != plain
    assert "generated" in stamped


def test_logy_renders_positive_data():
    fig = hl.Figure(title="tail", logy=True)
    fig.add_line([1.0, 2.0, 3.0], [1e-4, 1e-2, 1.0], label="p")
    text = hl.render(fig)
    assert "<svg" in text


def test_write_svg_round_trip(tmp_path):
    out = tmp_path / "fig.svg"
    hl.write_svg(out, _sample_figure())
    text = out.read_text(encoding="utf-8")
    assert text == hl.render(_sample_figure())


def test_empty_figure_renders():
    fig = hl.Figure(title="empty")
    text = hl.render(fig)
    assert "</svg>" in text
