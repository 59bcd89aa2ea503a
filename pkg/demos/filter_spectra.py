"""Estimate what first-layer filters respond to, before and after training.

Gradient ascent grows a noise input toward each filter's activation; the
DFT of the result shows the filter's preferred frequencies.  The
Jensen-Shannon divergence between the peak-bin histogram and a flat one
summarises how concentrated the peaks are; at this scale the effect of
training on it is small and varies by layer.
"""

import sys
from pathlib import Path

import numpy as np

from samplecnn import audio, train, viz
from samplecnn.model import ModelSpec, Network
from samplecnn.train import TrainConfig


def peak_summary(net, layer):
    cfg = viz.VizConfig(layer=layer, steps=50, step_size=0.5)
    ests = viz.layer_spectra(net, cfg)
    hist = viz.peak_histogram(ests, n_bins=len(ests[0].spectrum))
    return ests, cfg, viz.js_divergence_to_uniform(hist)


def main(out_dir="filter_spectra_out"):
    spec = ModelSpec(m=3, n=5, input_len=729, channels=(16, 16, 32, 32, 64), n_tags=8)
    untrained = Network(spec, seed=0, dtype=np.float64)

    clips, entries = audio.generate_synthetic(audio.SynthSpec(n_clips=1000, seed=1))
    splits, _ = train.build_splits(spec, clips, entries)
    result = train.fit(Network(spec, seed=0), splits["train"], splits["valid"],
                       TrainConfig(max_epochs=10))
    trained = Network(spec, result.best_params.astype(np.float64))

    # A 3-sample, stride-3 first layer can only produce period-3 input
    # gradients, so its estimates peak at DC or a third of the sample rate.
    # Deeper layers combine more samples and show a wider variety.
    print("layer  JS(untrained)  JS(trained)")
    for layer in range(1, 5):
        _, _, before = peak_summary(untrained, layer)
        ests, cfg, after = peak_summary(trained, layer)
        print(f"{layer:>5}  {before:>13.3f}  {after:>11.3f}")

    rate = 8000
    hz = [e.peak_bin * rate / cfg.input_len for e in ests]
    print(f"layer {cfg.layer} peak frequencies (Hz):", " ".join(f"{f:.0f}" for f in hz))
    print("tone band edges (Hz):", " ".join(f"{f:.0f}" for f in audio.band_edges(8, rate)))

    out = Path(out_dir)
    out.mkdir(exist_ok=True)
    csv_path, _ = viz.export_spectra(ests, out / f"layer{cfg.layer}.csv", cfg)
    print(f"spectra written to {csv_path}")


if __name__ == "__main__":
    main(*sys.argv[1:])
