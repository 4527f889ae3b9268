import sys

import pytest

from source.metrics.pesq import build_command, parse_score, pesq_external
from source.utils.errors import ToolFailed, ToolNotConfigured


@pytest.mark.parametrize('output, score', [
    ('P.862.2 Prediction (MOS-LQO):  = 2.750\n', 2.75),
    ('Loading...\n\nPESQ_MOS = 3.1\n\n', 3.1),
    ('-0.2', -0.2),
])
def test_parse_score(output, score):
    assert parse_score(output) == pytest.approx(score)


@pytest.mark.parametrize('output', ['', 'no score here\n', 'score 7.5\n'])
def test_parse_score_failures(output):
    with pytest.raises(ToolFailed):
        parse_score(output)


def test_build_command():
    template = "pesq +16000 {mode_flag} {clean} {degraded}"
    assert build_command(template, 'c.wav', 'd.wav', 'wb') == ['pesq', '+16000', '+wb', 'c.wav', 'd.wav']
    assert build_command(template, 'c.wav', 'd.wav', 'nb') == ['pesq', '+16000', 'c.wav', 'd.wav']
    assert build_command("tool --mode {mode} {clean} {degraded}", 'c', 'd', 'nb') == ['tool', '--mode', 'nb', 'c', 'd']

    with pytest.raises(ToolNotConfigured):
        build_command("pesq {reference} {degraded}", 'c', 'd')


def test_tool_must_be_configured():
    with pytest.raises(ToolNotConfigured):
        pesq_external('c.wav', 'd.wav', None)
    with pytest.raises(ToolNotConfigured):
        pesq_external('c.wav', 'd.wav', '')


def test_external_tool(pesq_tool):
    assert pesq_external('c.wav', 'd.wav', pesq_tool) == pytest.approx(2.75)
    assert pesq_external('c.wav', 'd.wav', pesq_tool, mode='nb') == pytest.approx(2.75)


def test_failing_tool():
    with pytest.raises(ToolFailed):
        pesq_external('c.wav', 'd.wav', f"'{sys.executable}' -c 'import sys; sys.exit(3)' {{clean}} {{degraded}}")
    with pytest.raises(ToolFailed):
        pesq_external('c.wav', 'd.wav', "/nonexistent/pesq {clean} {degraded}")
