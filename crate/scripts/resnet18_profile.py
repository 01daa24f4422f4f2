#!/usr/bin/env python3
"""Enumerate ResNet18 (CIFAR variant, 32x32x3 input) shapes at residual-block
boundaries and write the default cut-layer profile.

Cut layer k means the vehicle runs the first k units of the network:
  unit 1      stem (3x3 conv 3->64 + BN)
  units 2-3   stage 1 basic blocks (64 ch, 32x32)
  units 4-5   stage 2 basic blocks (128 ch, 16x16; unit 4 downsamples)
  units 6-7   stage 3 basic blocks (256 ch, 8x8; unit 6 downsamples)
  units 8-9   stage 4 basic blocks (512 ch, 4x4; unit 8 downsamples), unit 9
              also carries global pooling and the 10-way classifier.

The downsampling units are the cheap rows of the FLOPs table (1.47-1.48
GFLOPs increments versus 1.89-1.90), which pins this alignment.

Usage: python3 scripts/resnet18_profile.py > profiles/resnet18.json
"""
import json

BITS = 32
NUM_CLASSES = 10

# forward GFLOPs per sample, vehicle side / server side
VEHICLE_GFLOPS = [0.00, 0.99, 2.89, 4.79, 6.27, 8.16, 9.64, 11.53, 13.00, 14.89]
SERVER_GFLOPS = [14.89, 13.90, 12.00, 10.10, 8.62, 6.72, 5.25, 3.36, 1.89, 0.00]


def conv(cin, cout, k):
    return cin * cout * k * k


def bn(c):
    return 2 * c


def basic_block(cin, cout, stride):
    p = conv(cin, cout, 3) + bn(cout) + conv(cout, cout, 3) + bn(cout)
    if stride != 1 or cin != cout:
        p += conv(cin, cout, 1) + bn(cout)
    return p


def units():
    """(params, output shape) for each unit, in execution order."""
    out = []
    out.append((conv(3, 64, 3) + bn(64), (64, 32, 32)))
    out.append((basic_block(64, 64, 1), (64, 32, 32)))
    out.append((basic_block(64, 64, 1), (64, 32, 32)))
    out.append((basic_block(64, 128, 2), (128, 16, 16)))
    out.append((basic_block(128, 128, 1), (128, 16, 16)))
    out.append((basic_block(128, 256, 2), (256, 8, 8)))
    out.append((basic_block(256, 256, 1), (256, 8, 8)))
    out.append((basic_block(256, 512, 2), (512, 4, 4)))
    fc = 512 * NUM_CLASSES + NUM_CLASSES
    out.append((basic_block(512, 512, 1) + fc, (NUM_CLASSES,)))
    return out


def prod(shape):
    n = 1
    for s in shape:
        n *= s
    return n


def main():
    layers = []
    cum_params = 0
    shape = (3, 32, 32)
    table = [(0, shape)] + [(p, s) for p, s in units()]
    for cut, (params, shape) in enumerate(table):
        cum_params += params
        smashed = prod(shape) * BITS
        layers.append({
            "cut": cut,
            "fwd_vehicle_flops": round(VEHICLE_GFLOPS[cut] * 1e9),
            "fwd_server_flops": round(SERVER_GFLOPS[cut] * 1e9),
            "smashed_bits": smashed,
            "smashed_grad_bits": smashed,
            "vehicle_model_bits": cum_params * BITS,
        })
    assert cum_params == 11_173_962, cum_params
    doc = {
        "name": "resnet18-cifar-blocks",
        "units": {
            "fwd_vehicle_flops": "FLOPs per sample (forward)",
            "fwd_server_flops": "FLOPs per sample (forward)",
            "smashed_bits": "bits per sample",
            "smashed_grad_bits": "bits per sample",
            "vehicle_model_bits": "bits",
            "flops_per_cycle": "FLOPs per CPU cycle",
        },
        "bwd_factor": 2.0,
        "flops_per_cycle": 16.0,
        "layers": layers,
    }
    print(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main()
