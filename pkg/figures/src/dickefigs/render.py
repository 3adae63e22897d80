"""Verify recipe inputs, draw the figure, stamp provenance, write the file.

Rendering never writes into the results tree and never leaves a partial
image behind: all bindings are checksum-verified before a single artist
is created, and the output file is only opened after the figure is
complete.  Each image carries a Description metadata entry listing the
sha256 of every bound CSV and of every run manifest it consumed, plus a
small visible caption stub with the model parameters.
"""

from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .inputs import StaleInputError, VerifiedInput, read_table, verify_binding
from .recipes import RECIPES, FigureRecipe

_CRITICAL_LINE = -1.0  # E / |E_c| of the separatrix in rescaled units


def _ratio(manifest: dict) -> float:
    """Field over its critical value, from the run's model section."""
    m = manifest["config"]["model"]
    b_c = 4.0 * m["g_khz"] ** 2 / m["delta_khz"]
    return m["b_khz"] / b_c


def _window(manifest: dict) -> tuple[float, float]:
    r = manifest.get("config", {}).get("renyi", {})
    return r.get("average_start", 4.0), r.get("average_end", 12.0)


def _window_mean(t: np.ndarray, y: np.ndarray, win: tuple[float, float]):
    mask = (t >= win[0]) & (t <= win[1])
    return float(y[mask].mean())


# ---------------------------------------------------------------------------
# drawers: one per figure id, returning a complete matplotlib Figure


def _draw_2a(tables, verified, style):
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2), layout="constrained",
                             sharey=True)
    window = style.get("window", "above")
    bins = style.get("bins", 24)
    s_max = style.get("s_max", 4.0)
    panels = (
        (axes[0], "normal_spacings", "normal_summary", "regular"),
        (axes[1], "chaotic_spacings", "chaotic_summary", "chaotic"),
    )
    x = np.linspace(0.0, s_max, 240)
    for ax, spac_key, summ_key, label in panels:
        spac = tables[spac_key]
        sel = spac["window"] == window
        s = spac["spacing"][sel].astype(float)
        if s.size == 0:
            raise ValueError(f"no spacings in window {window!r} for {label}")
        ax.hist(s, bins=bins, range=(0.0, s_max), density=True,
                color="0.75", edgecolor="0.4", label="unfolded spacings")
        ax.plot(x, 0.5 * np.pi * x * np.exp(-0.25 * np.pi * x**2),
                color="tab:red", label="Wigner-Dyson")
        ax.plot(x, np.exp(-x), color="tab:blue", ls="--", label="Poisson")
        summ = tables[summ_key]
        ok = (summ["ok"] == "true") & (summ["window"] == window)
        w = summ["n_levels"][ok].astype(float) - 2.0
        mean_r = float(np.sum(summ["mean_r"][ok].astype(float) * w) / w.sum())
        ratio = _ratio(verified[summ_key].manifest)
        ax.set_title(f"{label}: $B/B_c$={ratio:.2g}, "
                     rf"$\langle\tilde r\rangle$={mean_r:.3f}")
        ax.set_xlabel("unfolded spacing $s$")
        ax.set_xlim(0, s_max)
    axes[0].set_ylabel("$P(s)$")
    axes[1].legend(frameon=False, fontsize=8)
    return fig


def _draw_2b(tables, verified, style):
    t = tables["map"]
    fig, ax = plt.subplots(figsize=(5.4, 3.6), layout="constrained")
    xs = t["sqrt_bc_over_b"]
    cols = np.unique(xs)
    edges_y = np.unique(np.concatenate([t["e_lo"], t["e_hi"]]))
    grid = np.full((len(edges_y) - 1, len(cols)), np.nan)
    for xv, lo, lam, n_conv in zip(xs, t["e_lo"], t["lambda_max"],
                                   t["n_converged"]):
        i = int(np.searchsorted(edges_y, lo))
        j = int(np.searchsorted(cols, xv))
        if n_conv > 0:
            grid[i, j] = lam
    if len(cols) > 1:
        dx = np.diff(cols) / 2.0
        edges_x = np.concatenate([[cols[0] - dx[0]], cols[:-1] + dx,
                                  [cols[-1] + dx[-1]]])
    else:
        edges_x = np.array([cols[0] - 0.5, cols[0] + 0.5])
    pcm = ax.pcolormesh(edges_x, edges_y, np.ma.masked_invalid(grid),
                        cmap=style.get("cmap", "viridis"), shading="flat")
    ax.axhline(_CRITICAL_LINE, color="w", lw=0.8, ls="--")
    ax.axvline(1.0, color="w", lw=0.8, ls=":")
    ax.set_xlabel(r"$\sqrt{B_c/B}$")
    ax.set_ylabel(r"$E\,/\,|E_c|$")
    fig.colorbar(pcm, ax=ax, label=r"$\lambda_L$ (1/ms)")
    return fig


def _draw_3a(tables, verified, style):
    fig, ax = plt.subplots(figsize=(5.6, 4.0), layout="constrained")
    inset = ax.inset_axes([0.56, 0.12, 0.4, 0.34])
    tag = style.get("generator_tag", "X")
    sizes, t_stars = [], []
    for key in ("size1", "size2", "size3", "size4"):
        tab = tables[key]
        v = verified[key]
        n_spins = v.manifest["config"]["model"]["n_spins"]
        t = tab["t_ms"]
        growth = np.maximum(tab["one_minus_F_over_dphi2"], 1e-12)
        (line,) = ax.plot(t, growth, label=f"$N$={n_spins}")
        derived = v.manifest["derived"][f"fotoc_{tag}"]
        t_star = derived["t_star_ms"]
        ax.plot([t_star], [np.interp(t_star, t, growth)], marker="v",
                color=line.get_color(), ms=7, mec="k", zorder=5)
        sizes.append(n_spins)
        t_stars.append(t_star)
    ax.set_yscale(style.get("yscale", "log"))
    ax.set_xlabel("$t$ (ms)")
    ax.set_ylabel(r"$(1-F)\,/\,\delta\phi^2$")
    ax.legend(frameon=False, fontsize=8, loc="upper left")
    sizes = np.asarray(sizes, dtype=float)
    t_stars = np.asarray(t_stars, dtype=float)
    inset.semilogx(sizes, t_stars, "o", color="k", ms=4)
    slope, intercept = np.polyfit(np.log(sizes), t_stars, 1)
    nn = np.geomspace(sizes.min(), sizes.max(), 50)
    inset.semilogx(nn, intercept + slope * np.log(nn), "-", color="0.5",
                   lw=1.0)
    inset.set_xlabel("$N$", fontsize=8)
    inset.set_ylabel("$t^*$ (ms)", fontsize=8)
    inset.tick_params(labelsize=7)
    inset.set_title(f"rate {1.0 / slope:.2f}/ms", fontsize=8)
    return fig


def _draw_3b(tables, verified, style):
    t = tables["moments"]
    derived = verified["moments"].manifest["derived"]
    fig, ax = plt.subplots(figsize=(5.2, 3.6), layout="constrained")
    notes = []
    for name in style.get("observables", ("X", "n")):
        y = t[f"var_{name}"]
        (line,) = ax.plot(t["t_ms"], y, label=f"var({name})")
        fit = derived.get(f"lambda_var_{name}")
        if isinstance(fit, dict):
            w0, w1 = fit["window_ms"]
            rate = fit["rate_per_ms"]
            tt = np.linspace(w0, w1, 40)
            y0 = float(np.interp(w0, t["t_ms"], y))
            ax.plot(tt, y0 * np.exp(rate * (tt - w0)), ls="--", lw=1.0,
                    color=line.get_color())
            notes.append(f"var({name}): {rate:.2f}/ms")
    ax.set_yscale(style.get("yscale", "log"))
    ax.set_xlabel("$t$ (ms)")
    ax.set_ylabel("rescaled variance")
    if notes:
        ax.text(0.02, 0.98, "\n".join(notes), transform=ax.transAxes,
                va="top", fontsize=8)
    ax.legend(frameon=False, fontsize=8, loc="lower right")
    return fig


def _draw_4a(tables, verified, style):
    fig, axes = plt.subplots(2, 1, figsize=(5.2, 4.6), sharex=True,
                             layout="constrained")
    panels = (
        (axes[0], "normal", style.get("normal_column", "s_f_spin")),
        (axes[1], "chaotic", style.get("chaotic_column", "s_f_spin_boson")),
    )
    for ax, key, column in panels:
        tab = tables[key]
        ax.plot(tab["t_ms"], tab["s2_exact"], color="k", label="$S_2$ exact")
        ax.plot(tab["t_ms"], tab[column], ls="--", color="tab:orange",
                label="estimator")
        ratio = _ratio(verified[key].manifest)
        ax.set_title(f"$B/B_c$ = {ratio:.2g}", fontsize=9)
        ax.set_ylabel("entropy (nats)")
    axes[0].legend(frameon=False, fontsize=8)
    axes[1].set_xlabel("$t$ (ms)")
    return fig


def _draw_4b(tables, verified, style):
    fig, ax = plt.subplots(figsize=(5.4, 3.8), layout="constrained")
    inset = ax.inset_axes([0.12, 0.55, 0.36, 0.4])

    def scan(keys, column):
        pts = []
        for key in keys:
            v = verified[key]
            tab = tables[key]
            win = _window(v.manifest)
            x = np.sqrt(1.0 / _ratio(v.manifest))
            pts.append((x, _window_mean(tab["t_ms"], tab[column], win)))
        pts.sort()
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])

    scan_keys = style["scan_keys"]
    for column, label, marker in (("s2_exact", "$S_2$ exact", "o"),
                                  ("s_f_spin_boson", "estimator, both I0",
                                   "s"),
                                  ("s_f_spin", "estimator, ladder I0", "^")):
        x, y = scan(scan_keys, column)
        ax.plot(x, y, marker=marker, ms=5, label=label)
    ax.axvline(1.0, color="0.7", lw=0.8, ls=":")
    ax.set_xlabel(r"$\sqrt{B_c/B}$")
    ax.set_ylabel("window-averaged entropy (nats)")
    ax.legend(frameon=False, fontsize=8, loc="lower right")
    x, y = scan(style["decayed_keys"], "s_f_spin_boson_decayed")
    inset.plot(x, y, marker="d", ms=4, color="tab:red")
    inset.set_title("with dephasing", fontsize=8)
    inset.tick_params(labelsize=7)
    return fig


def _draw_4c(tables, verified, style):
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2), layout="constrained")
    derived = verified["spin"].manifest.get("derived", {})
    panels = (
        (axes[0], "spin", "m", "spin projection $m$", "tv_spin"),
        (axes[1], "fock", "n", "boson number $n$", "tv_fock"),
    )
    for ax, key, col, xlabel, tv_key in panels:
        tab = tables[key]
        x = tab[col]
        ax.bar(x, tab["p_time_avg"], width=0.9 * np.min(np.diff(x))
               if len(x) > 1 else 0.9, color="0.8", label="time average")
        ax.step(x, tab["p_diagonal"], where="mid", color="tab:red",
                label="dephased ensemble")
        occupied = x[tab["p_time_avg"] > 1e-5]
        if occupied.size:
            pad = 0.05 * (occupied.max() - occupied.min() + 1.0)
            ax.set_xlim(occupied.min() - pad, occupied.max() + pad)
        tv = derived.get(tv_key)
        title = f"TV = {tv:.3f}" if isinstance(tv, float) else ""
        ax.set_title(title, fontsize=9)
        ax.set_xlabel(xlabel)
    axes[0].set_ylabel("probability")
    axes[1].legend(frameon=False, fontsize=8)
    return fig


def _draw_4d(tables, verified, style):
    fig, ax = plt.subplots(figsize=(5.2, 3.8), layout="constrained")
    sub = tables["sub"]
    win = _window(verified["sub"].manifest)
    mask = (sub["t_ms"] >= win[0]) & (sub["t_ms"] <= win[1])
    sizes = np.unique(sub["l_a"]).astype(int)
    exact = np.array([sub["s2_exact"][mask & (sub["l_a"] == la)].mean()
                      for la in sizes])
    est = np.array([sub["estimator"][mask & (sub["l_a"] == la)].mean()
                    for la in sizes])
    ax.plot(sizes, exact, "o", color="k", label="$S_2$ exact")
    ax.plot(sizes, est, "s", mfc="none", color="tab:orange",
            label="estimator")
    ens = tables["ensemble"]
    order = np.argsort(ens["l_a"])
    ax.plot(ens["l_a"][order], ens["s2_thermal"][order], ls=":",
            color="tab:blue", label="thermal")
    ax.plot(ens["l_a"][order], ens["s2_diagonal"][order], ls="-.",
            color="0.5", label="dephased")
    ax.set_xlabel("subsystem size $L_A$")
    ax.set_ylabel("window-averaged entropy (nats)")
    ax.legend(frameon=False, fontsize=8)
    return fig


_DRAWERS = {
    "2a": _draw_2a,
    "2b": _draw_2b,
    "3a": _draw_3a,
    "3b": _draw_3b,
    "4a": _draw_4a,
    "4b": _draw_4b,
    "4c": _draw_4c,
    "4d": _draw_4d,
}


# ---------------------------------------------------------------------------
# provenance stamping


def provenance_pairs(verified: dict[str, VerifiedInput]) -> list[str]:
    """Sorted `run/file=sha256` pairs covering every CSV and manifest."""
    pairs: dict[str, str] = {}
    for v in verified.values():
        pairs[f"{v.run}/{v.path.name}"] = v.sha256
        pairs[f"{v.run}/run_manifest.json"] = v.manifest_sha256
    return [f"{name}={digest}" for name, digest in sorted(pairs.items())]


def provenance_description(verified: dict[str, VerifiedInput]) -> str:
    return "dickefigs inputs " + " ".join(provenance_pairs(verified))


def embedded_description(path: Path) -> str:
    """Read back the Description metadata of a rendered PNG or SVG."""
    data = Path(path).read_bytes()
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        pos = 8
        while pos + 8 <= len(data):
            length = int.from_bytes(data[pos:pos + 4], "big")
            ctype = data[pos + 4:pos + 8]
            if ctype in (b"tEXt", b"iTXt"):
                chunk = data[pos + 8:pos + 8 + length]
                keyword, _, rest = chunk.partition(b"\x00")
                if keyword == b"Description":
                    if ctype == b"iTXt":
                        # compression flag/method + language + translated
                        rest = rest[2:]
                        rest = rest.split(b"\x00", 2)[-1]
                    return rest.decode("utf-8", errors="replace")
            pos += 12 + length
        raise ValueError(f"no Description metadata in {path}")
    text = data.decode("utf-8", errors="replace")
    match = re.search(r"<dc:description>(.*?)</dc:description>", text, re.S)
    if match is None:
        raise ValueError(f"no Description metadata in {path}")
    return match.group(1).strip()


def _caption_stub(fig, recipe: FigureRecipe,
                  verified: dict[str, VerifiedInput]) -> None:
    """Visible one-liner: model parameters from the manifests + digests."""
    manifests = {v.run: v.manifest for v in verified.values()}
    models = [m.get("config", {}).get("model", {}) for m in manifests.values()]
    bits = []
    for field_name, label in (("n_spins", "N"), ("g_khz", "g"),
                              ("delta_khz", "delta"), ("b_khz", "B")):
        values = sorted({m[field_name] for m in models if field_name in m})
        if values:
            text = ",".join(f"{v:g}" for v in values)
            bits.append(f"{label}={text}")
    seeds = sorted({m.get("seed") for m in manifests.values()})
    bits.append(f"seed={','.join(str(s) for s in seeds)}")
    digests = " ".join(f"{run}:{man_sha[:10]}" for run, man_sha in sorted(
        (v.run, v.manifest_sha256) for v in verified.values()))
    caption = (f"[{recipe.figure_id}] {recipe.title}. "
               + "; ".join(bits) + "\n" + digests)
    engine = fig.get_layout_engine()
    if engine is not None:
        engine.set(rect=(0.0, 0.055, 1.0, 0.945))
    fig.text(0.01, 0.002, caption, fontsize=5, family="monospace",
             va="bottom")


def build_figure(figure_id: str, results_dir: Path):
    """Verify all inputs of one recipe, then build its figure.

    Returns (figure, verified-inputs).  Nothing is written to disk; the
    results tree is only ever read.
    """
    recipe = RECIPES.get(figure_id)
    if recipe is None:
        raise KeyError(f"unknown figure id {figure_id!r}; "
                       f"known: {', '.join(sorted(RECIPES))}")
    if not recipe.inputs:
        raise StaleInputError(f"recipe {figure_id} binds no inputs")
    verified = {b.key: verify_binding(Path(results_dir), b)
                for b in recipe.inputs}
    tables = {key: read_table(v.path) for key, v in verified.items()}
    fig = _DRAWERS[figure_id](tables, verified, dict(recipe.style))
    _caption_stub(fig, recipe, verified)
    return fig, verified


def render(figure_id: str, results_dir: Path, out_dir: Path,
           fmt: str = "png") -> Path:
    """Render one figure to `<out_dir>/fig_<id>.<fmt>` and return the path."""
    fig, verified = build_figure(figure_id, results_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"fig_{figure_id}.{fmt}"
    fig.savefig(path, dpi=150,
                metadata={"Description": provenance_description(verified)})
    plt.close(fig)
    return path
