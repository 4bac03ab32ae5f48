import sys
from typing import Dict, Optional, TextIO

import pandas as pd

from utils.helpers import format_rate


class ConsoleSummary:
    """Short human-readable digest of a command result, written to stderr"""

    def __init__(self, stream: Optional[TextIO] = None):
        self.stream = sys.stderr if stream is None else stream

    def _line(self, label: str, value):
        self.stream.write(f"{label:<28}{value}\n")

    def render(self, command: str, report: Dict, table: Optional[pd.DataFrame] = None):
        self.stream.write(f"== {command} ==\n")
        handler = getattr(self, f"show_{command}", None)
        if handler is not None:
            handler(report, table)
        self.stream.flush()

    def show_spectrum(self, report: Dict, table=None):
        self._line("lambda1(A_h)", format_rate(report["lambda1_A"], 12))
        self._line("lambda0", format_rate(report["lambda0"], 12))
        self._line("lambda0 (continuum)", format_rate(report.get("lambda0_continuum"), 12))
        self._line("spectral abscissa", format_rate(report["spectral_abscissa"], 12))
        if report["modes"]:
            self._line("dominant regime", report["modes"][0]["regime"])

    def show_resolvent(self, report: Dict, table=None):
        self._line("lambda", f"{format_rate(report['lambda_re'])} + {format_rate(report['lambda_im'])}i")
        self._line("relative residual", format_rate(report.get("residual"), 3))
        self._line("status", report["status"])

    def show_simulate(self, report: Dict, table=None):
        self._line("status", report["status"])
        self._line("samples", report["samples"])
        self._line("t final", format_rate(report["t_final"]))
        self._line("max |u|", format_rate(report["max_abs_u"]))
        if report.get("violation_time") is not None:
            self._line("violation time", format_rate(report["violation_time"]))

    def show_decay(self, report: Dict, table=None):
        self.show_simulate(report)
        fit = report.get("fit")
        if not fit:
            return
        self._line("omega_hat", f"{format_rate(fit['omega_hat'])} ({fit['method']}, {fit['quantity']})")
        self._line("lambda0", format_rate(fit.get("lambda0")))
        self._line("Re lambda_-(a_1)", format_rate(fit.get("linearized_rate")))
        self._line("C_hat", format_rate(fit.get("c_hat")))
        self._line("residual rms", format_rate(fit["residual_rms"], 3))

    def show_sweep(self, report: Dict, table: Optional[pd.DataFrame] = None):
        if table is not None and not table.empty:
            self.stream.write(table.to_string(index=False, float_format=lambda x: f"{x:.6g}") + "\n")
        self._line("largest decaying amplitude", format_rate(report["largest_decaying_amplitude"]))
        self._line("smallest violating", format_rate(report["smallest_violating_amplitude"]))
