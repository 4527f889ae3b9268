"""Modules for presenting the evaluation results."""

import io
import os
from typing import Iterable

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from source.metrics.evaluate import UNPROC, MetricReport, baseline_id
from source.utils.errors import IoError, MalformedCsv
from source.utils.path import atomic_target

sns.set_theme()

# Fixed ids inside the SVG so that reruns give identical files.
plt.rcParams['svg.hashsalt'] = 'avse'

METRIC_TITLES = {'estoi': 'ESTOI', 'pesq': 'PESQ'}
FAMILY_TITLES = {'seen': 'seen speakers', 'unseen': 'unseen speakers'}


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# EvalLog: {message}")


def read_reports(paths: Iterable[str]) -> MetricReport:
    """One report out of several evaluation CSVs; a model may appear only once."""

    reports = [MetricReport.read_csv(path) for path in paths]
    if not reports:
        raise MalformedCsv("No report given.")

    frame = pd.concat([report.frame for report in reports], ignore_index=True)
    keys = ['model_id', 'snr_db', 'metric']
    duplicated = frame.duplicated(subset=keys)
    if duplicated.any():
        # The same baseline may be written by several evaluations of one plan.
        repeated = frame[duplicated]
        if not set(repeated['modality']) <= {'none'}:
            raise MalformedCsv(f"Models {sorted(set(repeated['model_id']))} appear in more than one report.")
        frame = frame[~duplicated]

    return MetricReport(frame.reset_index(drop=True))


def split_family(model_id: str) -> str:
    return 'unseen' if model_id.endswith('*') else 'seen'


def plot_metric(report: MetricReport, metric: str, family: str) -> plt.Figure:
    """Mean score against SNR, one line per model of the family."""

    frame = report.frame[(report.frame['metric'] == metric) & (report.frame['model_id'].map(split_family) == family)]

    fig, ax = plt.subplots(figsize=(6, 4))
    sns.lineplot(data=frame, x='snr_db', y='mean', hue='model_id', style='model_id', markers=True, dashes=False, ax=ax)
    ax.set_xticks(sorted(frame['snr_db'].unique()))
    ax.set_xlabel('SNR (dB)')
    ax.set_ylabel(METRIC_TITLES.get(metric, metric))
    ax.set_title(f"{METRIC_TITLES.get(metric, metric)}, {FAMILY_TITLES[family]}")
    legend = ax.get_legend()
    if legend is not None:
        legend.set_title(None)
    fig.tight_layout()

    return fig


def save_figure(fig: plt.Figure, path: str, force: bool = False):
    if os.path.exists(path) and not force:
        raise IoError(f"{path} already exists, use force to overwrite.")

    tmp_path = atomic_target(path)
    try:
        fig.savefig(tmp_path, format='svg', metadata={'Date': None})
        os.replace(tmp_path, path)
    except OSError as error:
        raise IoError(f"Cannot write figure {path}: {error}") from error
    finally:
        plt.close(fig)


def summary_table(report: MetricReport) -> pd.DataFrame:
    """Mean score per (metric, model) and SNR."""
    return report.frame.pivot_table(index=['metric', 'model_id'], columns='snr_db', values='mean', sort=False)


def delta_table(report: MetricReport) -> pd.DataFrame:
    """Improvement of every model over the unprocessed mixtures of its family."""

    table = summary_table(report)
    rows = {}
    for metric, model in table.index:
        unproc = baseline_id(UNPROC, split_family(model))
        if model == unproc or (metric, unproc) not in table.index:
            continue
        rows[(metric, model)] = table.loc[(metric, model)] - table.loc[(metric, unproc)]

    if not rows:
        return pd.DataFrame(columns=table.columns)

    delta = pd.DataFrame.from_dict(rows, orient='index')
    delta.index = pd.MultiIndex.from_tuples(delta.index, names=table.index.names)

    return delta


def snr_gain(snrs: np.ndarray, lombard: np.ndarray, neutral: np.ndarray) -> float:
    """Mean horizontal shift (dB) at which the `neutral` curve reaches the `lombard` scores.

    For every grid SNR s the SNR s' with neutral(s') == lombard(s) is found
    by linear interpolation; scores outside the range of the neutral curve
    are skipped. Returns NaN if no score can be matched.
    """

    snrs, lombard, neutral = (np.asarray(a, dtype=np.float64) for a in (snrs, lombard, neutral))
    if not (len(snrs) == len(lombard) == len(neutral)):
        raise MalformedCsv("Curves for the SNR gain must share the SNR grid.")

    order = np.argsort(snrs)
    snrs, lombard, neutral = snrs[order], lombard[order], neutral[order]

    # Interpolation needs the neutral curve increasing in score.
    increasing = np.concatenate([[True], np.diff(neutral) > 0])
    xp, fp = neutral[increasing], snrs[increasing]

    inside = (lombard >= xp[0]) & (lombard <= xp[-1])
    if not inside.any():
        return float('nan')

    matched = np.interp(lombard[inside], xp, fp)

    return float(np.mean(matched - snrs[inside]))


def snr_gains(report: MetricReport) -> pd.DataFrame:
    """SNR gain of every L-trained model over its NL-trained counterpart."""

    table = summary_table(report)
    rows = []
    for metric, model in table.index:
        stem, star = (model[:-1], '*') if model.endswith('*') else (model, '')
        if not stem.endswith('-L'):
            continue
        counterpart = f"{stem[:-2]}-NL{star}"
        if (metric, counterpart) not in table.index:
            continue
        lombard, neutral = table.loc[(metric, model)].dropna(), table.loc[(metric, counterpart)].dropna()
        common = lombard.index.intersection(neutral.index)
        gain = snr_gain(common.to_numpy(), lombard[common].to_numpy(), neutral[common].to_numpy())
        rows.append({'metric': metric, 'lombard': model, 'neutral': counterpart, 'gain_db': gain})

    return pd.DataFrame(rows, columns=['metric', 'lombard', 'neutral', 'gain_db'])


def format_report(report: MetricReport) -> str:
    buffer = io.StringIO()
    float_format = lambda x: f"{x:.3f}"

    buffer.write("Mean scores\n")
    buffer.write(summary_table(report).to_string(float_format=float_format))
    buffer.write("\n\nImprovement over unprocessed mixtures\n")
    buffer.write(delta_table(report).to_string(float_format=float_format))

    gains = snr_gains(report)
    if not gains.empty:
        buffer.write("\n\nSNR gain of L-trained over NL-trained models (dB)\n")
        buffer.write(gains.to_string(index=False, float_format=lambda x: f"{x:.2f}"))

    buffer.write('\n')

    return buffer.getvalue()


def write_report(report: MetricReport, out_dir: str, force: bool = False) -> tuple[list[str], str]:
    """SVG per (metric, speaker family) plus `summary.txt`.

    Returns:
        (figure paths, summary text)
    """

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as error:
        raise IoError(f"Cannot create report directory {out_dir}: {error}") from error

    paths = []
    families = [f for f in ('seen', 'unseen') if any(split_family(m) == f for m in report.model_ids)]
    for family in families:
        for metric in report.metrics:
            path = os.path.join(out_dir, f"{metric}_{family}.svg")
            save_figure(plot_metric(report, metric, family), path, force)
            paths.append(path)
            _log(f"figure={path}")

    text = format_report(report)
    summary_path = os.path.join(out_dir, 'summary.txt')
    if os.path.exists(summary_path) and not force:
        raise IoError(f"{summary_path} already exists, use force to overwrite.")
    tmp_path = atomic_target(summary_path)
    try:
        with open(tmp_path, 'w', encoding='utf-8') as file:
            file.write(text)
        os.replace(tmp_path, summary_path)
    except OSError as error:
        raise IoError(f"Cannot write summary {summary_path}: {error}") from error

    return paths, text

