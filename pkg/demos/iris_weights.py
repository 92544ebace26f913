"""
Ability-weighted voting on iris
===============================

Grow a bagged pool, score every tree on the training rows, and let the
Gibbs sampler turn the 0/1 matrix into tree weights.
"""

import numpy as np

from irt_ensemble import (fit_irt_ensemble, load_bundled, majority_vote, predict_batch,
                          train_test_split)

iris = load_bundled("iris")
train, test = train_test_split(iris, 0.3, seed=1)

model, result, Y = fit_irt_ensemble(train, n_trees=100, engine="model2", seed=1)
print("performance matrix", Y.shape, "share correct", np.asarray(Y).mean().round(3))

# softmax(theta): stronger trees get up to about twice the uniform share
w = np.sort(model.weights)[::-1]
print("largest weights", w[:5].round(4), "weights sum", w.sum())

pred, acc = predict_batch(model, test)
plain = majority_vote(model.pool.predict_all(model.prepare(test.features)), 3)
print(f"weighted vote accuracy {acc:.3f}, majority vote {np.mean(plain == test.labels):.3f}")

# hardest training rows by estimated difficulty
beta = model.item_params["beta"]
for j in np.argsort(beta)[::-1][:5]:
    print(f"row {j:3d}  {train.classes[train.labels[j]]:12s}  beta {beta[j]:+.2f}")
