# %% [markdown]
# # Rooms, impulse responses and delays
#
# A shoebox room, one noise source and a handful of microphones. We render
# the recordings with the image-source model and read the inter-microphone
# delays back with GCC-PHAT.

# %%
import numpy as np

from soundloc.acoustics import RoomSpec, generate_rir, render_mixture, sample_scene
from soundloc.features import coherence, default_tau_max, estimate_tdoa, gcc_phat, welch_psd

room = RoomSpec()                      # 7 x 8 x 2 m, first-order reflections
scene = sample_scene(room, M=4, K=1, seed=3, n_samples=4096)
rec = render_mixture(room, scene.mics, scene.sources, noise_std=1e-3, seed=3)
rec.channels.shape

# %% [markdown]
# The impulse response from the source to microphone 0: the direct path
# first, then the six first-order wall reflections.

# %%
rir = generate_rir(room, scene.sources[0].position, scene.mics[0].position).taps
taps = np.flatnonzero(np.abs(rir) > 1e-3 * np.abs(rir).max())
taps[:7], np.round(rir[taps[:7]], 4)

# %% [markdown]
# GCC-PHAT between each microphone and microphone 0. A positive lag means
# the first signal arrives later. The geometric truth is the difference in
# path length divided by the speed of sound.

# %%
tau_max = default_tau_max(room)
src = np.asarray(scene.sources[0].position)
dist = np.linalg.norm(rec.mic_positions - src, axis=1)
for m in range(1, 4):
    est = estimate_tdoa(gcc_phat(rec.channels[m], rec.channels[0], tau_max, room.sample_rate))
    true = (dist[m] - dist[0]) / room.speed_of_sound
    print(f"mic {m}: estimated {est * 1e3:+.3f} ms, geometric {true * 1e3:+.3f} ms")

# %% [markdown]
# Magnitude-squared coherence says how linearly related two channels are
# per frequency. Reverberation and noise pull it below one.

# %%
c = coherence(welch_psd(rec.channels[0], rec.channels[1]))
float(c.values.min()), c.mean
