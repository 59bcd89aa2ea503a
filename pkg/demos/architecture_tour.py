"""Walk through the 3^9 sample-level network layer by layer.

Prints the layer table (kind, output shape, parameter count) for the default
model, then the size of every configuration on the m^n grid.
"""

from samplecnn.model import ModelSpec, Network, count_params, mn_grid_specs


def main():
    spec = ModelSpec()  # 3^9, 59049 samples, stride-3 first layer
    net = Network(spec)
    counts = count_params(spec)
    print(f"{spec.m}^{spec.n} model on {spec.input_len} samples")
    print(f"{'layer':<12} {'conv out':>14} {'pooled':>14} {'params':>9}")
    for (kind, act, pooled), n in zip(net.shapes(), counts.per_layer):
        print(f"{kind:<12} {str(act[::-1]):>14} {str(pooled[::-1]):>14} {n:>9}")
    print(f"total {counts.total} (+{counts.batchnorm_total} batch-norm scale/shift)\n")

    # the same builder covers every filter length / depth combination
    print(f"{'model':<6} {'input':>7} {'first stride':>13} {'params':>10}")
    for s in mn_grid_specs():
        print(f"{s.m}^{s.n:<4} {s.input_len:>7} {s.first_stride:>13} {count_params(s).total:>10}")


if __name__ == "__main__":
    main()
