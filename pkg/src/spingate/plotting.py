"""Report figures: signal traces and spectrum sticks.  Display only."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spectral import fft_view  # noqa: E402


def report_figure(report):
    """Two panels: return-signal traces, and estimated vs true spectral weight on the gateway."""
    fig, (ax_sig, ax_spec) = plt.subplots(2, 1, figsize=(7, 6), constrained_layout=True)
    dataset = report.dataset
    if dataset is not None:
        for n0 in dataset.initial_sites:
            s = dataset.signal(n0, n0)
            ax_sig.plot(s.times, s.values.real, lw=1, label=f"Re s {n0 + 1}->{n0 + 1}")
        ax_sig.set_xlabel("t")
        ax_sig.set_ylabel("signal")
        if len(dataset.initial_sites) <= 8:
            ax_sig.legend(fontsize=7, ncol=2)
    else:
        ax_sig.text(0.5, 0.5, "exact eigendata: no signals", ha="center", va="center", transform=ax_sig.transAxes)
        ax_sig.set_axis_off()

    est = report.estimate
    weight = np.sum(est.components**2, axis=0)
    ax_spec.vlines(est.frequencies, 0, weight, colors="C0", lw=2, label="estimated")
    eig = report.true_eigensystem
    if eig is not None:
        gw = est.gateway
        ax_spec.plot(eig.shifted, np.sum(eig.vectors[gw] ** 2, axis=0), "k+", ms=8, label="truth (unlifted)")
    if dataset is not None:
        n0 = dataset.initial_sites[0]
        omega, mag = fft_view(dataset.times, dataset.signal(n0, n0).values)
        ax_spec.plot(omega, mag * weight.max() / max(mag.max(), 1e-300), color="0.6", lw=0.8, label="FFT (scaled)")
    reach = 1.2 * max(np.abs(est.frequencies).max(initial=0.0), 1e-12)
    ax_spec.set_xlim(-reach, reach)
    ax_spec.set_xlabel("omega = E - E0")
    ax_spec.set_ylabel("gateway weight")
    ax_spec.legend(fontsize=7)
    return fig


def save_report_figure(report, path) -> None:
    fig = report_figure(report)
    fig.savefig(path)
    plt.close(fig)
