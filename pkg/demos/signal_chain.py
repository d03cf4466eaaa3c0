"""Filter one synthetic acquisition and compute the three window features.

Run with ``python demos/signal_chain.py``. Prints the low-pass response
around the cutoff, the window count of the 200 ms / 10 ms segmentation and
the per-class mean waveform length on one channel.
"""

import numpy as np

from myorepeat.dsp import design_butter2_lowpass, segment_windows
from myorepeat.experiment import preprocess
from myorepeat.features import extract_features
from myorepeat.synth import DriftModel, default_muap_model, generate_acquisition

RATE = 100.0
CUTOFF = 1.0

coeffs = design_butter2_lowpass(CUTOFF, RATE)
print("second-order low-pass, cutoff 1 Hz at 100 Hz")
for f in (0.1, 0.5, 1.0, 2.0, 5.0):
    print(f"  |H({f:4.1f} Hz)| = {abs(coeffs.frequency_response([f])[0]):.4f}")
print("  forward-backward gain at the cutoff is |H|^2 = 0.5")

rec = generate_acquisition(default_muap_model(seed=0), DriftModel(), day=1, slot="0900",
                           seed=2016, acquisition_id=2)
clean = preprocess(rec, CUTOFF)
print(f"\nacquisition: {clean.samples.shape[0]} samples x {clean.samples.shape[1]} channels")

windows = segment_windows(clean, window_ms=200, step_ms=10)
print(f"{len(windows)} labelled windows of 20 samples")

for kind in ("WL", "VAR", "STFT"):
    fm = extract_features(windows, kind)
    print(f"{kind:>4}: feature matrix {fm.values.shape}")

wl = extract_features(windows, "WL")
print("\nmean waveform length on channel 0 per class (rest = 0):")
for c in range(0, 18, 3):
    print(f"  class {c:2d}: {wl.values[wl.labels == c, 0].mean():.4f}")
