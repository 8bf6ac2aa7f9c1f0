"""Train a small broadband diffractive classifier.

Three thickness layers, ten wavelengths on [1.0, 1.45] mm, one wavelength per
digit class. The detected power spectrum on the single-pixel detector is the
class score vector; argmax names the class. Runs in a couple of minutes.
"""

from spectrapix.data import make_synthetic_digits
from spectrapix.losses import LossWeights
from spectrapix.model import build_model
from spectrapix.training import evaluate, train

train_set = make_synthetic_digits(1000, seed=0)
test_set = make_synthetic_digits(250, seed=1)

model = build_model(features=32, seed=0)
print(f"{len(model.layers)} layers, grid {model.grid_shape}, "
      f"{model.plan.count} wavelengths")

_, history = train(model, train_set, LossWeights(), epochs=3, batch_size=32,
                   seed=0, lr=0.1, test_set=test_set,
                   log=lambda rec: print(
                       f"epoch {rec['epoch']}  loss {rec['loss']:.3f}  "
                       f"train acc {rec['train_accuracy']:.3f}  "
                       f"test acc {rec['test_accuracy']:.3f}"))

res = evaluate(model, test_set)
print(f"\nfinal test accuracy {res['accuracy']:.3f}, "
      f"mean power efficiency {res['eta_mean']:.5f}")
print("confusion matrix (rows = truth):")
print(res["confusion"])
