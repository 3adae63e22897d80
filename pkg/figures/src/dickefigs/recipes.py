"""Figure recipes: which run outputs each panel reads and how it is drawn.

A recipe pins its inputs as (run subdirectory, filename) pairs under the
results directory handed to the renderer, so the expected tree layout is
part of the contract:

    results/
      spectrum_chaotic/   level_spacings.csv, level_summary.csv
      spectrum_normal/    level_spacings.csv, level_summary.csv
      lyapunov_map/       lyapunov_map.csv
      fotoc_a .. fotoc_d/ fotoc_X.csv        (four system sizes, ascending)
      twa/                twa_moments.csv
      renyi_b02 .. b4/    renyi_series.csv   (field ratios 0.2, 0.5, 1.5, 4;
                          renyi_b02 also needs renyi_subsystems.csv)
      renyi_b02_dec ...   renyi_series.csv   (same scan with dephasing)
      thermalize/         dist_spin.csv, dist_fock.csv, ensemble_renyi.csv

Every run directory must carry the run_manifest.json the simulation CLI
wrote next to its outputs; rendering refuses stale checksums.  Axis
scales, bin counts and series selections live in each recipe's `style`
mapping so the registry is the single place a panel's look is defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .inputs import InputBinding


@dataclass(frozen=True)
class FigureRecipe:
    """Identifier, bound inputs and drawing style for one figure."""

    figure_id: str
    title: str
    inputs: tuple[InputBinding, ...]
    style: dict = field(default_factory=dict)


def _b(key: str, run: str, filename: str) -> InputBinding:
    return InputBinding(key=key, run=run, filename=filename)


RECIPES: dict[str, FigureRecipe] = {}


def _register(recipe: FigureRecipe) -> None:
    RECIPES[recipe.figure_id] = recipe


_register(FigureRecipe(
    figure_id="2a",
    title="Nearest-neighbour level-spacing statistics",
    inputs=(
        _b("normal_spacings", "spectrum_normal", "level_spacings.csv"),
        _b("normal_summary", "spectrum_normal", "level_summary.csv"),
        _b("chaotic_spacings", "spectrum_chaotic", "level_spacings.csv"),
        _b("chaotic_summary", "spectrum_chaotic", "level_summary.csv"),
    ),
    style={"window": "above", "bins": 24, "s_max": 4.0},
))

_register(FigureRecipe(
    figure_id="2b",
    title="Largest Lyapunov exponent across field and energy",
    inputs=(_b("map", "lyapunov_map", "lyapunov_map.csv"),),
    style={"cmap": "viridis"},
))

_register(FigureRecipe(
    figure_id="3a",
    title="Echo-fidelity growth and scrambling times",
    inputs=(
        _b("size1", "fotoc_a", "fotoc_X.csv"),
        _b("size2", "fotoc_b", "fotoc_X.csv"),
        _b("size3", "fotoc_c", "fotoc_X.csv"),
        _b("size4", "fotoc_d", "fotoc_X.csv"),
    ),
    style={"generator_tag": "X", "yscale": "log"},
))

_register(FigureRecipe(
    figure_id="3b",
    title="Phase-space variance growth from semiclassical trajectories",
    inputs=(_b("moments", "twa", "twa_moments.csv"),),
    style={"observables": ("X", "n"), "yscale": "log"},
))

_register(FigureRecipe(
    figure_id="4a",
    title="Entropy estimators against the exact reduced entropy",
    inputs=(
        _b("normal", "renyi_b4", "renyi_series.csv"),
        _b("chaotic", "renyi_b02", "renyi_series.csv"),
    ),
    style={"normal_column": "s_f_spin", "chaotic_column": "s_f_spin_boson"},
))

_register(FigureRecipe(
    figure_id="4b",
    title="Window-averaged entropies across the field scan",
    inputs=(
        _b("b02", "renyi_b02", "renyi_series.csv"),
        _b("b05", "renyi_b05", "renyi_series.csv"),
        _b("b15", "renyi_b15", "renyi_series.csv"),
        _b("b4", "renyi_b4", "renyi_series.csv"),
        _b("b02_dec", "renyi_b02_dec", "renyi_series.csv"),
        _b("b05_dec", "renyi_b05_dec", "renyi_series.csv"),
        _b("b15_dec", "renyi_b15_dec", "renyi_series.csv"),
        _b("b4_dec", "renyi_b4_dec", "renyi_series.csv"),
    ),
    style={"scan_keys": ("b02", "b05", "b15", "b4"),
           "decayed_keys": ("b02_dec", "b05_dec", "b15_dec", "b4_dec")},
))

_register(FigureRecipe(
    figure_id="4c",
    title="Long-time marginals against the dephased ensemble",
    inputs=(
        _b("spin", "thermalize", "dist_spin.csv"),
        _b("fock", "thermalize", "dist_fock.csv"),
    ),
    style={},
))

_register(FigureRecipe(
    figure_id="4d",
    title="Subsystem entropy growth against ensemble references",
    inputs=(
        _b("sub", "renyi_b02", "renyi_subsystems.csv"),
        _b("ensemble", "thermalize", "ensemble_renyi.csv"),
    ),
    style={},
))
