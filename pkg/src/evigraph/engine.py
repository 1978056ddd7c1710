"""Dispatch a MethodSpec against a dataset, producing its Conclusion.

Rank tests take the phenomenon from the hypothesis (binary treatment
splits the outcome column); regression kinds carry their own formula.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, MethodError
from .stats.bayes import fit_bayes_binomial
from .stats.linear import fit_linear_model
from .stats.mixed import fit_linear_mixed_model
from .stats.ranktests import mann_whitney_u, wilcoxon_signed_rank


def _split_groups(data, hypothesis):
    treatment, outcome = hypothesis.phenomenon
    t = data.column(treatment)
    y = data.column(outcome)
    if not set(np.unique(t)) <= {0.0, 1.0}:
        raise DataError(f"treatment column {treatment} must be binary 0/1")
    return y[t == 0.0], y[t == 1.0]


def _build_pairs(data, hypothesis, pairing_column):
    """(treated, control) outcome pairs keyed by the pairing column.

    Each pairing label must contribute exactly one treated and one control
    row; the difference convention is treated minus control.
    """
    treatment, outcome = hypothesis.phenomenon
    t = data.column(treatment)
    y = data.column(outcome)
    labels = [str(v) for v in data.data[pairing_column]]
    by_label = {}
    for lbl, ti, yi in zip(labels, t, y):
        by_label.setdefault(lbl, {})[ti] = yi
        if len(by_label[lbl]) > 2:
            raise DataError(f"pairing label {lbl}: more than two rows")
    pairs = []
    for lbl in sorted(by_label):
        cell = by_label[lbl]
        if set(cell) != {0.0, 1.0}:
            raise DataError(
                f"pairing label {lbl}: needs one treated and one control row"
            )
        pairs.append((cell[1.0], cell[0.0]))
    return pairs


def run_method(data, spec, hypothesis=None, diagnostics_permutations=10000):
    """Fit the described method on the dataset; returns a Conclusion."""
    if spec.kind in ("mann_whitney_u", "wilcoxon_signed_rank"):
        if hypothesis is None:
            raise MethodError(f"{spec.kind} needs the hypothesis to locate "
                              "treatment and outcome columns")
    if spec.kind == "mann_whitney_u":
        control, treated = _split_groups(data, hypothesis)
        if control.size == 0 or treated.size == 0:
            raise DataError("one treatment arm is empty")
        return mann_whitney_u(treated, control, alpha=spec.alpha)
    if spec.kind == "wilcoxon_signed_rank":
        pairs = _build_pairs(data, hypothesis, spec.pairing_column)
        return wilcoxon_signed_rank(pairs, alpha=spec.alpha)
    if spec.kind == "linear_model":
        return fit_linear_model(
            data, spec.formula, spec,
            diagnostics_permutations=diagnostics_permutations)
    if spec.kind == "linear_mixed_model":
        return fit_linear_mixed_model(
            data, spec.formula, spec,
            diagnostics_permutations=diagnostics_permutations)
    if spec.kind == "bayes_binomial":
        return fit_bayes_binomial(data, spec.formula, spec)
    raise MethodError(f"unknown method kind {spec.kind!r}")
