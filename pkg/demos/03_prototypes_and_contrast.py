"""Class prototypes and the contrastive loss.

Weak-view embeddings are averaged per class and folded into a memory bank of
prototypes. Strong-view embeddings are then pulled toward the prototype of
their own class and pushed from the others.
"""

# %%
import math

import numpy as np

from pointdr import MemoryBank, bank_update, class_average, contrastive_loss

# Smallest case by hand: one query equal to the first of two orthogonal keys.
loss, _ = contrastive_loss(np.array([[1.0, 0.0]]), [0], np.eye(2), tau=1.0)
print(f"hand case {loss:.6f}  vs  log(1 + 1/e) = {math.log(1 + math.exp(-1)):.6f}")

# %%
# The bank starts empty. A class column is written outright the first time the
# class is seen and moves by momentum after that.
rng = np.random.default_rng(0)
bank = MemoryBank(embed_dim=3, num_classes=4, momentum=0.9)
f = rng.normal(size=(6, 3))
f /= np.linalg.norm(f, axis=1, keepdims=True)
means, present = class_average(f, [0, 0, 1, 1, 1, 3], num_classes=4)
bank_update(bank, means, present)
print("initialized columns:", bank.initialized.astype(int))

target = np.tile(np.array([[0.0], [0.0], [1.0]]), (1, 4))
for _ in range(50):
    bank_update(bank, target, present)
print("column 0 after 50 updates toward e_z:", np.round(bank.B[:, 0], 4))

# %%
# Queries only count when their class has a prototype; class 2 is skipped.
queries = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
loss, grad = contrastive_loss(queries, [0, 2], bank, tau=0.07)
print(f"loss {loss:.4f}; gradient on the class-2 query is zero: {not grad[1].any()}")
