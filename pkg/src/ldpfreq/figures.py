"""Loss-versus-epsilon figures rendered next to the CSV report."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_MARKERS = {"ss": "o", "ocms": "s", "wss": "^", "matrix-file": "D"}


def render_loss_figures(rows, stem) -> list[str]:
    """Write ``<stem>_l1.png`` and ``<stem>_l2.png`` from report rows.

    Measured losses are plotted as markers per mechanism, the closed-form
    prediction for each deployed configuration as a dashed line, and the
    fractional-support-size optimum (mechanism-independent) as a dotted
    floor.  Cells whose run failed only contribute theory curves.
    """
    stem = str(stem)
    paths = []
    for loss in ("l1", "l2"):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        mechanisms = sorted({r.mechanism for r in rows})
        cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for i, name in enumerate(mechanisms):
            cells = sorted((r for r in rows if r.mechanism == name), key=lambda r: r.epsilon)
            eps = [r.epsilon for r in cells]
            color = cycle[i % len(cycle)]
            measured = [(r.epsilon, getattr(r, f"{loss}_emp")) for r in cells
                        if getattr(r, f"{loss}_emp") is not None]
            if measured:
                ax.plot(
                    [m[0] for m in measured], [m[1] for m in measured],
                    _MARKERS.get(name, "x"), color=color, label=f"{name} measured",
                    markersize=6, linestyle="none",
                )
            ax.plot(
                eps, [getattr(r, f"{loss}_theory_int") for r in cells],
                "--", color=color, linewidth=1.2, label=f"{name} theory",
            )
        floor = sorted({(r.epsilon, getattr(r, f"{loss}_theory_real")) for r in rows})
        ax.plot(
            [f[0] for f in floor], [f[1] for f in floor],
            ":", color="black", linewidth=1.0, label="optimal (real k)",
        )
        ax.set_xlabel("privacy budget epsilon")
        ax.set_ylabel(f"{loss.upper()} loss")
        ax.set_yscale("log")
        ax.grid(True, which="both", alpha=0.25)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = f"{stem}_{loss}.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths.append(path)
    return paths
