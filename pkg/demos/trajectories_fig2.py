"""Classical paths through the transient barrier.

Two hundred paths start from positions drawn from the initial density with
the packet momentum. Without the barrier they are straight lines. With
k = 1/500 the barrier catches them just left of its centre and most turn
back.

Run with ``python demos/trajectories_fig2.py``.
"""

# %%
import numpy as np

from superarrival.scenarios import preset
from superarrival.trajectories import EnsembleConfig, integrate_ensemble

s = preset("fig2")
cfg = EnsembleConfig(200, 0, s.times)
free = integrate_ensemble(s.params, None, cfg)
bent = integrate_ensemble(s.params, s.barrier(1 / 500), cfg)

# %% Where the paths end up
q_free = np.array([tr.q[-1] for tr in free])
q_bent = np.array([tr.q[-1] for tr in bent])
print(f"free:    q(t_end) in [{q_free.min():.1f}, {q_free.max():.1f}]")
print(f"barrier: q(t_end) in [{q_bent.min():.1f}, {q_bent.max():.1f}], "
      f"{np.sum(q_bent < 0)} of {q_bent.size} turned back")

# %% Arrival at the detector
arr_free = np.array([tr.arrival_time(s.x_T) for tr in free])
arr_bent = np.array([tr.arrival_time(s.x_T) for tr in bent])
print(f"earliest free arrival at x_T: {arr_free.min():.2f}")
print(f"barrier paths reaching x_T:   {np.isfinite(arr_bent).sum()}")
