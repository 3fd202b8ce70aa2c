"""Write reference APF1 fixtures with the Python implementation.

Usage: python3 make_golden.py OUT_DIR

Emits:
  golden.apf  - pinned records whose bytes the TS writer must reproduce
  synth.apf   - a generated set for reader-compatibility checks
"""

import sys
from pathlib import Path

import numpy as np

from metaprobe.apf import (ActivationHeader, ActivationRecord, SynthSpec,
                           synth_activations, write_activation_set)

L, H, K = 2, 5, 3


def pinned_records():
    records = []
    for i, (example_id, label, span) in enumerate(
            [(7, 0, 1), (2 ** 40 + 7, 2, 3), (11, 1, 2)]):
        n = L * span * H
        # eighths are exact in float32, so both writers store identical bits
        values = [((i * 31 + j * 7) % 23) / 8.0 - 1.25 for j in range(n)]
        tensor = np.array(values, dtype="<f4").reshape(L, span, H)
        records.append(ActivationRecord(example_id=example_id, label=label,
                                        tensor=tensor))
    return records


def main():
    out_dir = Path(sys.argv[1])
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ActivationHeader(
        num_layers=L, hidden_dim=H, num_classes=K, num_examples=3,
        metadata={"encoder": "golden", "seed": 3, "note": "naïve ✓",
                  "label_map": {"literal": 0, "metaphor": 1, "other": 2}})
    write_activation_set(header, pinned_records(), out_dir / "golden.apf")

    synth = synth_activations(SynthSpec(
        num_examples=12, num_layers=3, hidden_dim=4, num_classes=2, seed=9,
        signal_layer=1, signal_strength=2.0))
    write_activation_set(synth.header, list(synth), out_dir / "synth.apf")


if __name__ == "__main__":
    main()
