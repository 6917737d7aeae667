"""The shared-encoder network: weight sharing, masking, exact gradients.

Run:  python demos/03_network_anatomy.py
"""

import numpy as np

import deathcast as dc
from deathcast.dataset import BalancedBatch

# One encoder weight set serves all 10 hero slots; its outputs concatenate
# in slot order and feed the fully connected head with 10 sigmoid outputs.
cfg = dc.default_config("full")
print(f"full variant: encoder {cfg.per_hero_count} -> {list(cfg.shared_layers)}, "
      f"head {cfg.head_input_width} -> {list(cfg.final_layers)} -> 10, "
      f"{cfg.n_parameters():,} parameters, lr {cfg.learning_rate}")

# Weight sharing means the encoder representation of a vector does not
# depend on which slot it occupies.
small = dc.ModelConfig(variant="minimal", per_hero_count=15, shared_layers=(16, 8),
                       final_layers=(16,), learning_rate=1e-3, seed=0)
params = dc.init_params(small)
rng = np.random.default_rng(1)
v = rng.random(15)
base = rng.random((1, 10, 15))
reprs = []
for slot in (0, 9):
    x = base.copy()
    x[0, slot] = v
    _, trace = dc.forward(params, x)
    reprs.append(trace.encoder_act[-1].reshape(10, -1)[slot].copy())
print(f"encoder output identical in slot 0 and slot 9: "
      f"{np.array_equal(reprs[0], reprs[1])}")

# Training error flows through one selected slot only: flipping the labels
# of every other slot changes nothing, to the last bit.
feats = rng.random((4, 10, 15))
labels = rng.random((4, 10)) < 0.5
batch = BalancedBatch(features=feats, labels=labels, selected_slot=2)
flipped = labels.copy()
flipped[:, [0, 1, 3, 4, 5, 6, 7, 8, 9]] ^= True
batch2 = BalancedBatch(features=feats, labels=flipped, selected_slot=2)
l1, g1 = dc.loss_and_grad(params, batch)
l2, g2 = dc.loss_and_grad(params, batch2)
same = l1 == l2 and all(np.array_equal(a, b)
                        for (_, a), (_, b) in zip(g1.arrays(), g2.arrays()))
print(f"non-selected label flips change loss/gradients: {not same}")

# The backward pass is hand-derived; central finite differences verify it.
report = dc.gradient_check(dc.small_check_config(seed=0))
print(f"gradient check over {report.n_checked} parameters: "
      f"max relative error {report.max_rel_error:.2e} "
      f"({'OK' if report.passed else 'BROKEN'} at tolerance {report.tolerance})")
