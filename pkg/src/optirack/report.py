"""Figure rendering for the CLI report paths.

Each renderer takes the in-memory result rows and a target path and writes a
PNG. The CSV stays the canonical output; figures are a convenience view of
the same numbers.
"""

import matplotlib

matplotlib.use("Agg")  # headless
import matplotlib.pyplot as plt

_STYLE = {
    "figure.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
}


def render_sweep_figure(rows, path) -> None:
    """One panel per GPU count: total time vs buffer size, line per algorithm."""
    with plt.rc_context(_STYLE):
        counts = sorted({r.nranks for r in rows})
        fig, axes = plt.subplots(
            1, len(counts), figsize=(3.4 * len(counts), 3.0),
            sharey=True, squeeze=False)
        for ax, nranks in zip(axes[0], counts):
            for algorithm in sorted({r.algorithm for r in rows}):
                series = sorted(
                    (r for r in rows
                     if r.nranks == nranks and r.algorithm == algorithm),
                    key=lambda r: r.payload_bytes)
                if not series:
                    continue
                ax.plot([r.payload_bytes for r in series],
                        [r.cost.total_us for r in series],
                        marker="o", markersize=3, label=algorithm)
            ax.set_xscale("log", base=2)
            ax.set_yscale("log")
            ax.set_title(f"P = {nranks}")
            ax.set_xlabel("buffer size (bytes)")
        axes[0][0].set_ylabel("allreduce time (us)")
        axes[0][-1].legend(loc="upper left")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_alloc_figure(stats, path) -> None:
    """Rejection-with-free-capacity rate per allocator."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.0))
        names = [s.allocator for s in stats]
        rates = [s.rejection_rate for s in stats]
        bars = ax.bar(names, rates, width=0.5, color=["#2a9d8f", "#e76f51"])
        for bar, stat in zip(bars, stats):
            ax.annotate(
                f"{stat.rejected_with_free_capacity}/{stat.requests_total}",
                (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                ha="center", va="bottom", fontsize=8)
        ax.set_ylabel("rejection rate with free capacity")
        ax.set_ylim(0, max(rates + [0.05]) * 1.3)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_throughput_figure(result, path) -> None:
    """Baseline vs photonic end-to-end time with the speedup annotated."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.0))
        names = ["ring (baseline)", "radix (photonic)"]
        times = [result.t_baseline_us, result.t_photonic_us]
        ax.bar(names, times, width=0.5, color=["#577590", "#f3722c"])
        ax.set_ylabel("trace time (us)")
        ax.set_title(f"speedup {result.speedup:.2f}x")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
