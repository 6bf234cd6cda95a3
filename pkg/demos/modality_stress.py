# %% [markdown]
# Camera failure and wind
#
# Train the fused model next to camera-only and radar-only baselines on the
# default synthetic set, then knock out one sensor at test time. Takes a minute
# or so on one core.

# %%
import time

from leafwet.data import DatasetConfig, apply_eval_condition, synth_dataset
from leafwet.model import ModelConfig
from leafwet.training import TrainConfig, evaluate, train

t0 = time.perf_counter()
train_set = synth_dataset()
test_set = synth_dataset(cfg=DatasetConfig(), seed=1)
print(f"{len(train_set)} train / {len(test_set)} test samples in {time.perf_counter() - t0:.1f} s")

# %%
models = {}
for m in ("fused", "rgb", "sar"):
    t0 = time.perf_counter()
    models[m], hist = train(train_set, TrainConfig(), ModelConfig(modality=m))
    print(f"{m:5s} trained in {time.perf_counter() - t0:.1f} s, last epoch loss {hist[-1]['loss']:.3f}")

# %% accuracy under each test condition
conditions = {
    "clean": test_set,
    "camera dark": apply_eval_condition(test_set, rgb_blackout=True),
    "wind 1 mm": apply_eval_condition(test_set, wind_mm=1.0, seed=7),
    "wind 2 mm": apply_eval_condition(test_set, wind_mm=2.0, seed=7),
}
print(f"{'':12s}" + "".join(f"{m:>8s}" for m in models))
for name, ds in conditions.items():
    print(f"{name:12s}" + "".join(f"{evaluate(p, ds)['accuracy']:8.3f}" for p in models.values()))
