"""
Ranking published TEP Fault 11 scores
=====================================

Normalized IG and SHAP scores for the 53 TEP channels under IDV11 (random
reactor cooling water inlet temperature), as published.  The analysis
functions only need the score vectors, so they can be checked on numbers
we did not produce.
"""

# %%
import csv
import sys
from pathlib import Path

import numpy as np

from faultxai import analysis as an
from faultxai.report import ReportBundle, emit_heatmap

here = Path(__file__).resolve().parent
out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out") / "fault11"
with open(here.parent / "tests" / "data" / "idv11_published.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
names = [r["feature"] for r in rows]
ig = np.array([float(r["IG"]) for r in rows])
shap = np.array([float(r["SHAP"]) for r in rows])

# %%
print(an.format_score_table(names, ig, shap, block_sizes=(14, 14, 13, 12)))

# %%
# Both methods put the reactor temperature, the cooling water outlet
# temperature and the cooling water valve on top, in different order.
agree = an.agreement(ig, shap, 3, names)
print("IG   top-3:", agree.top_a)
print("SHAP top-3:", agree.top_b)
print(f"overlap {agree.top_k_overlap:.2f}, Spearman {agree.rank_correlation:.2f}")

# %%
smap = an.load_subsystem_map("tep")
loc = an.localization_score(ig, smap, "IDV11", 3, names)
print("expected", sorted(loc.expected), "matched", loc.matched)

# %%
bundle = ReportBundle(["IDV11"], names, {"IG": ig[None], "SHAP": shap[None]})
print("wrote", emit_heatmap(bundle, out / "heatmap.svg"))
