"""Misalignment vaccination.

Trains one model normally and one with random lateral shifts of the layers
during training ("vaccination"), then sweeps the test-time misalignment of
the middle layer. The vaccinated model degrades more gracefully.
"""

from spectrapix.data import make_synthetic_digits
from spectrapix.model import build_model
from spectrapix.training import VaccinationPlan, misalignment_sweep, train

train_set = make_synthetic_digits(1000, seed=0)
test_set = make_synthetic_digits(250, seed=1)
deltas = [0.0, 0.5, 1.0, 1.5]

models = {}
for tag, vac in (("plain", None),
                 ("vaccinated", VaccinationPlan.uniform(0.5, 3))):
    model = build_model(features=32, seed=0)
    train(model, train_set, vaccination=vac, epochs=4, batch_size=32,
          seed=0, lr=0.1)
    models[tag] = model

print(f"{'delta_mm':>8}  {'plain':>8}  {'vaccinated':>10}")
sweeps = {tag: misalignment_sweep(m, test_set, deltas, trials=5, seed=0)
          for tag, m in models.items()}
for i, delta in enumerate(deltas):
    print(f"{delta:8.1f}  {sweeps['plain'][i]['accuracy_mean']:8.3f}  "
          f"{sweeps['vaccinated'][i]['accuracy_mean']:10.3f}")
