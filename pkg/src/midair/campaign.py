"""Seeded Monte-Carlo campaigns and their reports.

A campaign runs independent episodes (optionally across processes), then
aggregates per-parameter RMS errors against each vehicle's ground truth in
the same 13-row x 4-motor layout used for single-vehicle reporting.  The
summary is written as machine-readable CSV, an aligned text table, and a
set of rendered figures; identical seeds produce byte-identical CSV/text.
"""

import copy
import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import EpisodeConfig, config_to_ini
from .episode import EpisodeReport, run_episode
from .ident import ControlParams

# Display scaling for the text table, chosen so entries read in O(1) digits.
_ROW_SCALES = {
    "B1x*k": (1e6, "B1x*k*1e6"), "B1y*k": (1e6, "B1y*k*1e6"),
    "B1z*k": (1e6, "B1z*k*1e6"), "B1p*k": (1e6, "B1p*k*1e6"),
    "B1q*k": (1e6, "B1q*k*1e6"), "B1r*k": (1e6, "B1r*k*1e6"),
    "B2p": (1e3, "B2p*1e3"), "B2q": (1e3, "B2q*1e3"), "B2r": (1e3, "B2r*1e3"),
    "omega_max": (1.0, "omega_max"), "kappa": (1.0, "kappa"),
    "omega_idle": (1.0, "omega_idle"), "tau": (1e3, "tau_ms"),
}


@dataclass
class CampaignSummary:
    """Aggregated outcome of a seeded episode batch."""

    reports: list
    seeds: list
    rms_error: np.ndarray        # 13x4, fitted vs true, SI units
    mean_abs_truth: np.ndarray   # 13, over episodes and motors
    success_count: int = 0
    oracle_attitude: bool = False

    @property
    def n(self):
        return len(self.reports)

    @property
    def all_success(self):
        return self.success_count == self.n

    def relative_rms(self, label):
        """Worst-motor RMS relative to the row's mean-absolute truth."""
        i = ControlParams.row_labels().index(label)
        denom = self.mean_abs_truth[i]
        if denom <= 0.0:
            return math.inf
        return float(np.max(self.rms_error[i]) / denom)

    def rms_of(self, label):
        i = ControlParams.row_labels().index(label)
        return float(np.max(self.rms_error[i]))


def _run_indexed(args):
    cfg, out_dir = args
    return run_episode(cfg, out_dir=out_dir)


def run_campaign(n, base_cfg: EpisodeConfig, seeds=None, out_dir=None, jobs=1,
                 figures=True):
    """Run n episodes and aggregate; episodes share nothing mutable.

    seeds defaults to base_cfg.seed + [0..n).  When out_dir is given the
    per-tick logs land in out_dir/episodes/ and the summary reports are
    written alongside.
    """
    if n < 1:
        raise ValueError("need at least one episode")
    if seeds is None:
        seeds = [base_cfg.seed + i for i in range(n)]
    if len(seeds) != n:
        raise ValueError("seed list length must match episode count")
    episode_dir = None
    if out_dir is not None:
        episode_dir = os.path.join(out_dir, "episodes")
        os.makedirs(episode_dir, exist_ok=True)

    cfgs = []
    for seed in seeds:
        cfg = copy.deepcopy(base_cfg)
        cfg.seed = int(seed)
        cfgs.append(cfg)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_indexed, [(c, episode_dir) for c in cfgs]))
    else:
        reports = [run_episode(c, out_dir=episode_dir) for c in cfgs]

    fitted = np.stack([r.fitted.as_rows() if r.fitted is not None
                       else np.full((13, 4), np.nan) for r in reports])
    truth = np.stack([r.truth.as_rows() for r in reports])
    err = fitted - truth
    rms = np.sqrt(np.nanmean(err ** 2, axis=0))
    mean_abs = np.mean(np.abs(truth), axis=(0, 2))

    summary = CampaignSummary(
        reports=reports, seeds=[int(s) for s in seeds],
        rms_error=rms, mean_abs_truth=mean_abs,
        success_count=sum(r.success for r in reports),
        oracle_attitude=base_cfg.oracle_attitude,
    )
    if out_dir is not None:
        write_reports(summary, base_cfg, out_dir, figures=figures)
    return summary


def summary_csv(summary):
    """Machine-readable parameter table, SI units."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["# midair campaign-summary v1"])
    w.writerow(["parameter", "mean_abs_truth",
                "rms_m1", "rms_m2", "rms_m3", "rms_m4"])
    for i, label in enumerate(ControlParams.row_labels()):
        w.writerow([label, f"{summary.mean_abs_truth[i]:.9g}"]
                   + [f"{v:.9g}" for v in summary.rms_error[i]])
    w.writerow([])
    w.writerow(["episodes", summary.n])
    w.writerow(["successes", summary.success_count])
    w.writerow(["oracle_attitude", str(summary.oracle_attitude).lower()])
    return buf.getvalue()


def summary_text(summary):
    """Aligned table of parameter-error RMS over the campaign."""
    lines = []
    lines.append(f"Parameter error RMS over the {summary.n} simulated runs")
    lines.append("")
    header = f"{'parameter':<14}{'truth |mean|':>14}" \
        + "".join(f"{f'RMS m{i + 1}':>12}" for i in range(4))
    lines.append(header)
    lines.append("-" * len(header))
    for i, label in enumerate(ControlParams.row_labels()):
        scale, shown = _ROW_SCALES[label]
        row = f"{shown:<14}{summary.mean_abs_truth[i] * scale:>14.3f}"
        row += "".join(f"{v * scale:>12.3f}" for v in summary.rms_error[i])
        lines.append(row)
    lines.append("")
    lines.append(f"successful recoveries: {summary.success_count}/{summary.n}")
    saturated = sum(r.gyro_saturated for r in summary.reports)
    lines.append(f"gyro saturation during excitation: {saturated}/{summary.n}")
    recs = [r.recovery_time for r in summary.reports if not math.isnan(r.recovery_time)]
    if recs:
        lines.append(f"recovery time after switchover: mean {np.mean(recs):.3f} s, "
                     f"max {np.max(recs):.3f} s")
    return "\n".join(lines) + "\n"


def episodes_csv(summary):
    """Per-episode metrics (no wall-clock columns: byte-stable output)."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["# midair episode-metrics v1"])
    w.writerow(["seed", "success", "failure_reason", "crashed", "gyro_saturated",
                "aborted_motors", "fit_valid", "detect_time", "switchover_time",
                "recovery_time", "rate_tracking_time", "position_converged_time",
                "max_attitude_error_after_2s_deg", "allocation_degraded_ticks"])
    for r in summary.reports:
        w.writerow([
            r.seed, int(r.success), r.failure_reason, int(r.crashed),
            int(r.gyro_saturated), sum(r.aborted_motors), int(r.fit_valid),
            f"{r.detect_time:.4f}", f"{r.switchover_time:.4f}",
            f"{r.recovery_time:.4f}", f"{r.rate_tracking_time:.4f}",
            f"{r.position_converged_time:.4f}",
            f"{r.max_attitude_error_after_2s:.3f}", r.allocation_degraded_ticks,
        ])
    return buf.getvalue()


def write_reports(summary, base_cfg, out_dir, figures=True):
    """Write summary CSV/text, per-episode metrics, config echo, figures."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write(summary_csv(summary))
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summary_text(summary))
    with open(os.path.join(out_dir, "episodes.csv"), "w") as fh:
        fh.write(episodes_csv(summary))
    config_to_ini(base_cfg, os.path.join(out_dir, "effective_config.ini"))
    if figures:
        from . import figures as figmod
        figmod.render_campaign_figures(summary, out_dir)
    return out_dir
