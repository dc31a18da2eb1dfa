import math
import re
import xml.etree.ElementTree as ET

import pytest

from jpts.evaluation import EvalReport, ReportRow
from jpts.plots import emit_plots, load_table
from jpts.trainer import EpochRecord, TrainLog

NS = "{http://www.w3.org/2000/svg}"


def make_log(n):
    log = TrainLog()
    for e in range(1, n + 1):
        log.append(EpochRecord(e, 10.0 / e, 12.0 / e, 1.0, 2.0, None, 0.0))
    return log


def test_single_epoch(tmp_path):
    svg, csv = emit_plots(make_log(1), tmp_path / "a.svg")
    root = ET.parse(svg).getroot()
    assert len(root.findall(f"{NS}circle[@data-name='train_loss']")) == 1
    assert len(csv.read_text().splitlines()) == 2


def test_byte_identical(tmp_path):
    emit_plots(make_log(7), tmp_path / "a.svg")
    emit_plots(make_log(7), tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_axis_margins(tmp_path):
    log = make_log(9)
    svg, _ = emit_plots(log, tmp_path / "a.svg")
    root = ET.parse(svg).getroot()
    ys = log.column("train_loss") + log.column("val_loss")
    xs = log.column("epoch")
    for axis, vals in (("x", xs), ("y", ys)):
        lo, hi = min(vals), max(vals)
        pad = 0.05 * (hi - lo)
        assert float(root.get(f"data-{axis}-min")) == pytest.approx(lo - pad, abs=1e-12)
        assert float(root.get(f"data-{axis}-max")) == pytest.approx(hi + pad, abs=1e-12)
    # every point is drawn inside the plot frame
    frame = root.findall(f"{NS}rect")[1]
    x0, y0 = float(frame.get("x")), float(frame.get("y"))
    x1, y1 = x0 + float(frame.get("width")), y0 + float(frame.get("height"))
    for c in root.iter(f"{NS}circle"):
        assert x0 < float(c.get("cx")) < x1 and y0 < float(c.get("cy")) < y1


def test_report_plot_skips_exact(tmp_path):
    rows = [ReportRow("jpts", "1/16", a, 4, 0, -10.0 - a, 0.9, 40) for a in (0.3, 0.5)]
    rows.append(ReportRow("baseline", "1/16", 1.0, 4, 0, -math.inf, None, 40))
    svg, csv = emit_plots(EvalReport(rows), tmp_path / "r.svg")
    text = svg.read_text()
    assert len(re.findall("<circle", text)) == 2
    assert load_table(csv.read_text()) == EvalReport(rows)


def test_empty_input(tmp_path):
    with pytest.raises(ValueError):
        emit_plots(TrainLog(), tmp_path / "x.svg")


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_plots(make_log(2), tmp_path / "missing" / "x.svg")
