"""
Where the hard samples are
==========================

On a 4 x 4 checkerboard the estimated difficulty should rise near the cell
edges. The scatter plot sizes each point by its difficulty.
"""

import os

from irt_ensemble import McmcConfig, fit_irt_ensemble, load_bundled
from irt_ensemble.evaluation import difficulty_report
from irt_ensemble.reports import difficulty_scatter

board = load_bundled("checkerboard")
model, _, _ = fit_irt_ensemble(board, n_trees=200, engine="model2", seed=0,
                               engine_config=McmcConfig(300, 100, seed=0))

rep = difficulty_report(model, board, cells_per_side=4)
print("corr(beta, closeness to an edge):", round(rep.boundary_correlation, 3))

out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "output")
os.makedirs(out, exist_ok=True)
difficulty_scatter(rep, os.path.join(out, "checkerboard_difficulty.svg"))
print("figure written to", out)
