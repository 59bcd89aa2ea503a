"""Train a small raw-waveform tagger on synthetic tone mixtures and score it.

Each clip holds one to three sine tones; a tag is on when a tone falls in
its frequency band, so a working model should get close to perfect AUC.
"""

import argparse
import time

from samplecnn import audio, evaluate, train
from samplecnn.model import ModelSpec, Network
from samplecnn.train import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--clips", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    clips, entries = audio.generate_synthetic(audio.SynthSpec(n_clips=args.clips, seed=args.seed))
    spec = ModelSpec(m=3, n=5, input_len=729, channels=(16, 16, 32, 32, 64), n_tags=8)
    splits, _ = train.build_splits(spec, clips, entries)
    print({k: len(v) for k, v in splits.items()}, "clips per split")

    net = Network(spec, seed=args.seed)
    t0 = time.perf_counter()
    result = train.fit(net, splits["train"], splits["valid"],
                       TrainConfig(seed=args.seed, max_epochs=args.epochs))
    for row in result.history:
        print(f"epoch {row['epoch']:3d}  train {row['train_loss']:.4f}  "
              f"valid {row['val_loss']:.4f}  lr {row['lr']:g}")
    print(f"{time.perf_counter() - t0:.1f}s of training")

    # score the best-on-validation weights, averaging over each clip's tiles
    table = evaluate.predict_songs(Network(spec, result.best_params), splits["test"])
    for k, a in enumerate(evaluate.tag_aucs(table)):
        print(f"band {k}: AUC {a:.4f}")
    print(f"mean AUC {evaluate.mean_auc(table):.4f}")


if __name__ == "__main__":
    main()
