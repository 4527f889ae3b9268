import math

import numpy as np
import pandas as pd
import pytest

from source.metrics.evaluate import REPORT_COLUMNS, MetricReport
from source.training.result import (
    delta_table,
    plot_metric,
    read_reports,
    snr_gain,
    snr_gains,
    split_family,
    summary_table,
    write_report,
)
from source.utils.errors import IoError, MalformedCsv

SNRS = [-10.0, -5.0, 0.0, 5.0]
CURVES = {
    'AV-L': ('AV', 'L', [0.40, 0.55, 0.70, 0.80]),
    'AV-NL': ('AV', 'NL', [0.30, 0.40, 0.55, 0.70]),
    'unproc': ('none', 'none', [0.20, 0.30, 0.45, 0.60]),
    'AO-L*': ('AO', 'L', [0.30, 0.45, 0.60, 0.70]),
    'unproc*': ('none', 'none', [0.20, 0.30, 0.45, 0.60]),
}


def _report(curves=CURVES) -> MetricReport:
    rows = [
        (model_id, modality, condition, snr, 'estoi', mean, 0.05, 10)
        for model_id, (modality, condition, means) in curves.items()
        for snr, mean in zip(SNRS, means)
    ]
    return MetricReport(pd.DataFrame(rows, columns=REPORT_COLUMNS))


def test_snr_gain():
    snrs = np.array([0.0, 5.0, 10.0])
    neutral = np.array([0.2, 0.4, 0.6])

    assert snr_gain(snrs, neutral, neutral) == pytest.approx(0.0)
    assert snr_gain(snrs, neutral + 0.2, neutral) == pytest.approx(5.0)
    assert snr_gain(snrs[::-1], (neutral + 0.2)[::-1], neutral[::-1]) == pytest.approx(5.0)
    assert math.isnan(snr_gain(snrs, neutral + 1.0, neutral))

    with pytest.raises(MalformedCsv):
        snr_gain(snrs, neutral[:2], neutral)


def test_snr_gains_pair_lombard_with_neutral():
    gains = snr_gains(_report())
    assert list(gains['lombard']) == ['AV-L']
    assert list(gains['neutral']) == ['AV-NL']
    assert gains.loc[0, 'gain_db'] > 0


def test_split_family():
    assert split_family('AV-L') == 'seen'
    assert split_family('AV-L*') == 'unseen'
    assert split_family('unproc*') == 'unseen'


def test_summary_and_delta_tables():
    summary = summary_table(_report())
    assert summary.loc[('estoi', 'AV-L'), 0.0] == pytest.approx(0.70)

    delta = delta_table(_report())
    assert delta.loc[('estoi', 'AV-L'), 0.0] == pytest.approx(0.25)
    assert delta.loc[('estoi', 'AO-L*'), -10.0] == pytest.approx(0.10)
    assert ('estoi', 'unproc') not in delta.index


def test_plot_has_one_line_per_model():
    fig = plot_metric(_report(), 'estoi', 'seen')
    labels = [text.get_text() for text in fig.axes[0].get_legend().get_texts()]
    assert [label for label in labels if label in CURVES] == ['AV-L', 'AV-NL', 'unproc']
    assert fig.axes[0].get_xlabel() == 'SNR (dB)'


def test_write_report(tmp_path):
    paths, text = write_report(_report(), str(tmp_path))

    assert sorted(p.split('/')[-1] for p in paths) == ['estoi_seen.svg', 'estoi_unseen.svg']
    assert (tmp_path / 'summary.txt').read_text() == text
    assert 'Mean scores' in text
    assert 'SNR gain' in text

    with pytest.raises(IoError):
        write_report(_report(), str(tmp_path))
    write_report(_report(), str(tmp_path), force=True)


def test_figures_are_reproducible(tmp_path):
    write_report(_report(), str(tmp_path / 'a'))
    write_report(_report(), str(tmp_path / 'b'))
    for name in ('estoi_seen.svg', 'estoi_unseen.svg', 'summary.txt'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_read_reports_merges_shared_baselines(tmp_path):
    first, second = str(tmp_path / 'first.csv'), str(tmp_path / 'second.csv')
    _report({k: CURVES[k] for k in ('AV-L', 'unproc')}).to_csv(first)
    _report({k: CURVES[k] for k in ('AV-NL', 'unproc')}).to_csv(second)

    merged = read_reports([first, second])
    assert merged.model_ids == ['AV-L', 'unproc', 'AV-NL']
    assert len(merged.frame) == 3 * len(SNRS)

    with pytest.raises(MalformedCsv):
        read_reports([first, first])
    with pytest.raises(MalformedCsv):
        read_reports([])
