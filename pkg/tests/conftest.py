import numpy as np
import pytest
from hypothesis import settings

from metaprobe.apf import SynthSpec, synth_activations
from metaprobe.probe import ProbeConfig, ProbeDataset

settings.register_profile("suite", deadline=None, max_examples=25)
settings.load_profile("suite")


@pytest.fixture
def small_config():
    # small dims + short budget: fast, still exercises every code path
    return ProbeConfig(num_classes=2, projection_dim=8, mlp_hidden_dim=8,
                       epochs=2)


def make_synth(n=200, layers=4, hidden=16, classes=2, seed=0,
               signal_layer=None, strength=0.0, max_span=3):
    spec = SynthSpec(num_examples=n, num_layers=layers, hidden_dim=hidden,
                     num_classes=classes, seed=seed,
                     signal_layer=signal_layer, signal_strength=strength,
                     max_span_len=max_span)
    return synth_activations(spec)


def make_dataset(**kwargs) -> ProbeDataset:
    return ProbeDataset.from_activation_set(make_synth(**kwargs))


def nearest_centroid_accuracy(train: ProbeDataset, test: ProbeDataset,
                              layer: int) -> float:
    """Training-free oracle: classify by nearest class centroid at one
    layer. High accuracy proves the label is decodable there no matter
    what any probe does."""
    x_tr = train.means[:, layer, :]
    x_te = test.means[:, layer, :]
    classes = np.unique(train.labels)
    centroids = np.stack([x_tr[train.labels == c].mean(axis=0)
                          for c in classes])
    d = ((x_te[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    pred = classes[np.argmin(d, axis=1)]
    return float(np.mean(pred == test.labels))
