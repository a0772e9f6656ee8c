"""
Faults in the closed-loop reactor
=================================

The built-in process is a jacketed CSTR feeding a cooled separator, with
four PI loops.  Here we inject a coolant inlet temperature step and look at
where it shows up.
"""

# %%
import sys
from pathlib import Path

import numpy as np

from faultxai.analysis import deviation_from_normal
from faultxai.procsim import CHANNELS, SIM_SCENARIOS, Dataset, Run, default_process_spec, simulate
from faultxai.report import emit_variable_plots

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out") / "simulator"
spec = default_process_spec()
normal = simulate(spec, None, seed=1)
fault = SIM_SCENARIOS["coolant_inlet_step"]
faulty = simulate(spec, fault, seed=1)

# %%
# Same sensor noise seed, so everything before onset is bit-identical.
print("pre-onset identical:", np.array_equal(normal.data[:200], faulty.data[:200]))

# %%
# The temperature loop hides most of the step in the reactor temperature
# and moves it onto the coolant valve instead.
dev = deviation_from_normal(faulty.data, normal.data, onset=fault.onset_index, horizon=100)
for name, d in sorted(zip(CHANNELS, dev), key=lambda t: -t[1])[:5]:
    print(f"{name:24s} {d:6.2f} normal-std")

# %%
# Other archetypes for comparison: a slow kinetics drift and a stuck valve.
for sid in ("kinetics_drift", "coolant_valve_sticking"):
    res = simulate(spec, SIM_SCENARIOS[sid], seed=1)
    d = deviation_from_normal(res.data, normal.data, onset=200, horizon=300)
    print(sid, "->", CHANNELS[int(np.argmax(d))])

# %%
# Write the faulty trace over the normal one for the top channels.
ds = Dataset(CHANNELS, [Run(normal.data, "normal"), Run(faulty.data, fault.id, fault.onset_index)],
             ["normal", fault.id], np.zeros(len(CHANNELS)), np.ones(len(CHANNELS)))
paths = emit_variable_plots(ds, 1, ["coolant_valve", "reactor_temp", "coolant_outlet_temp"], out)
print("wrote", *paths, sep="\n  ")
