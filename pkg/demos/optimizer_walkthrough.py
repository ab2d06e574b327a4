"""Gauss-Newton on the two-layer target model, step by step.

    python demos/optimizer_walkthrough.py

Builds the first-frame training set of one synthetic object, then runs the
initial schedule (joint layers) and a few second-layer updates while
printing the loss before and after every step.
"""

import numpy as np

from onlinevos.augmentation import AugmentationConfig, generate_initial_set
from onlinevos.features import STRIDE, ToyFeatureProvider
from onlinevos.io import to_float
from onlinevos.memory import SampleMemory
from onlinevos.objective import prepare_label
from onlinevos.optimizer import OptimizerConfig, optimize
from onlinevos.target_model import BOTH, W2_ONLY, ModelConfig, init_params
from onlinevos.synthetic import render_sequence, tier_spec


def show(rec):
    print(f"  step {rec['gn_step']}: {rec['cg_iterations']:2d} CG iterations, "
          f"loss {rec['loss_before']:.4f} -> {rec['loss_after']:.4f}")


def main():
    frames, labels = render_sequence(tier_spec("easy", 3, frames=2, objects=1))
    img, mask = to_float(frames[0]), (labels[0] == 1).astype(float)
    provider = ToyFeatureProvider()

    pairs = generate_initial_set(img, mask, AugmentationConfig(count=8))
    samples = [(provider(a), y) for a, y in pairs]
    systems = [prepare_label(y, STRIDE) for _, y in pairs]
    memory = SampleMemory.init_from_initial_set(samples, 0, capacity=80, eta=0.1, systems=systems)
    print(f"memory: {len(memory)} samples, weights {np.round(memory.weights, 3)}")

    cfg = OptimizerConfig()
    params = init_params(ModelConfig(provider.channels, 6, 0))
    print("initial fit, both layers, schedule", cfg.schedule())
    params = optimize(params, memory.snapshot(), cfg, BOTH, cfg.schedule(), show)

    print("update, second layer only, three rounds of", cfg.update_schedule())
    w1 = params.w1.copy()
    for _ in range(3):
        params = optimize(params, memory.snapshot(), cfg, W2_ONLY, cfg.update_schedule(), show)
    assert np.array_equal(params.w1, w1)
    print("first layer unchanged by the updates")


if __name__ == "__main__":
    main()
