"""Figure rendering for campaign and episode reports.

Figures are written as PNG files alongside the delimited output; nothing
here is interactive (the CSVs remain the contract for custom plots).
"""

import math
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .ident import ControlParams


def campaign_error_figure(summary):
    """Grouped bars: per-motor RMS error next to the mean-absolute truth."""
    labels = ControlParams.row_labels()
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    groups = [(slice(0, 6), "thrust effectiveness B1*k"),
              (slice(6, 9), "rotor-acceleration effectiveness B2"),
              (slice(9, 13), "motor model")]
    for ax, (sl, title) in zip(axes, groups):
        rows = range(sl.start, sl.stop)
        x = np.arange(len(list(rows)))
        width = 0.18
        for m in range(4):
            vals = [summary.rms_error[i, m] for i in rows]
            ax.bar(x + (m - 1.5) * width, vals, width, label=f"motor {m + 1}")
        ax.plot(x, [summary.mean_abs_truth[i] for i in rows], "k_",
                markersize=18, label="|truth| mean")
        ax.set_xticks(x)
        ax.set_xticklabels([labels[i] for i in rows], rotation=30, ha="right")
        ax.set_yscale("log")
        ax.set_title(title)
        ax.grid(True, axis="y", alpha=0.3)
    axes[0].set_ylabel("RMS error (SI units)")
    axes[-1].legend(fontsize=8)
    fig.suptitle(f"parameter fit errors, {summary.n} episodes, "
                 f"{summary.success_count}/{summary.n} recovered")
    fig.tight_layout()
    return fig


def episode_figure(report):
    """Four stacked traces of one throw: altitude, attitude/rates, commands,
    and the rate-tracking error after switchover."""
    tr = report.trace
    fig, axes = plt.subplots(4, 1, figsize=(9, 9), sharex=True)
    t = tr["t"]
    axes[0].plot(t, tr["alt"])
    axes[0].set_ylabel("altitude [m]")
    axes[1].plot(t, tr["tilt_deg"], label="tilt [deg]")
    axes[1].plot(t, np.degrees(tr["omega_norm"]) / 10.0, label="|rate| [10 deg/s]")
    axes[1].legend(fontsize=8)
    axes[1].set_ylabel("attitude / rates")
    axes[2].plot(t, tr["delta_mean"])
    axes[2].set_ylabel("mean throttle")
    axes[3].plot(t, tr["rate_err"])
    axes[3].set_ylabel("|rate ref error| [rad/s]")
    axes[3].set_xlabel("time since release [s]")
    for ax in axes:
        ax.grid(True, alpha=0.3)
        if not math.isnan(report.detect_time):
            ax.axvline(report.detect_time, color="gray", ls=":", lw=1)
        if not math.isnan(report.switchover_time):
            ax.axvline(report.switchover_time, color="red", ls="--", lw=1)
    outcome = "recovered" if report.success else f"failed: {report.failure_reason}"
    fig.suptitle(f"episode seed {report.seed}: {outcome}")
    fig.tight_layout()
    return fig


def render_campaign_figures(summary, out_dir):
    """Write the campaign figure plus a trace of the first episode."""
    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    paths = []
    fig = campaign_error_figure(summary)
    p = os.path.join(fig_dir, "parameter_errors.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    if summary.reports and summary.reports[0].trace:
        fig = episode_figure(summary.reports[0])
        p = os.path.join(fig_dir, f"episode_{summary.reports[0].seed}.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths
