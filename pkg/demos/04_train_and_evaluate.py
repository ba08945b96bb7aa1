"""Train on clean scenes, evaluate under adverse weather.

Trains PointDR and the cross-entropy baseline from the same initialization
on clean procedural scenes, then reports mIoU on clean and corrupted copies
of the validation scenes. Pass a smaller scene count for a quick look:

    python demos/04_train_and_evaluate.py 16 5
"""

# %%
import sys

from pointdr import ToyBenchmark, TrainConfig
from pointdr.experiment import compare

n_train = int(sys.argv[1]) if len(sys.argv) > 1 else 64
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 20


def show(row):
    if row["epoch"] % 5 == 4:
        print("  epoch {epoch:2d}  ce {ce:.3f}  ct {ct:.3f}  total {total:.3f}".format(**row))


result = compare(seed=0, cfg=TrainConfig(epochs=epochs),
                 bench=ToyBenchmark(n_train=n_train), log=show)

# %%
print(f"\nclean      PointDR {result.pointdr_clean:.3f}   baseline {result.baseline_clean:.3f}")
print(f"corrupted  PointDR {result.pointdr_adverse:.3f}   baseline {result.baseline_adverse:.3f}")
print("\nPointDR on corrupted scenes (IoU x 100):")
print(result.pointdr_table.to_text())
