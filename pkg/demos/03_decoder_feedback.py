"""Electronic decoding and the reconstruction feedback loop.

Trains an efficiency-constrained optical front end (which costs some
accuracy), then a reconstruction decoder with the coupled loss
gamma * MAE + (1 - gamma) * cross-entropy of the re-injected scores s'.
Feeding each reconstruction back through the frozen optics corrects part of
the optically misclassified samples.
"""

from spectrapix.data import make_synthetic_digits
from spectrapix.decoder import (ReconLossConfig, create_mlp, feedback_evaluate,
                                train_reconstructor)
from spectrapix.losses import LossWeights
from spectrapix.model import build_model
from spectrapix.training import train

train_set = make_synthetic_digits(2000, seed=100)
test_set = make_synthetic_digits(500, seed=101)

model = build_model(features=32, seed=0)
train(model, train_set, LossWeights(alpha=0.2, beta=0.1), epochs=4,
      batch_size=32, seed=0, lr=0.1)

net = create_mlp(10, 28 * 28, "reconstruction", hidden=(128, 128), seed=0)
_, history = train_reconstructor(net, model, train_set,
                                 ReconLossConfig(gamma=0.95, structural="mae"),
                                 epochs=16, batch_size=64, lr=1e-3, seed=0)
print(f"decoder loss {history[0]['loss']:.4f} -> {history[-1]['loss']:.4f}")

res = feedback_evaluate(net, model, test_set)
print(f"optical accuracy  max(s):  {res['optical_accuracy']:.3f}")
print(f"feedback accuracy max(s'): {res['feedback_accuracy']:.3f}")
print(f"corrected {res['n_corrected']}, lost {res['n_lost']} "
      f"(net gain {res['n_corrected'] - res['n_lost']} of {len(test_set)})")
