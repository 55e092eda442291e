"""Private mean of user vectors with an outlier gate.

Walks through the pieces of the concentrated mean estimator on a small
two-dimensional example, then checks the noise level empirically.

Run with ``python3 demos/01_mean_estimator.py``.
"""

# %%
import warnings

import numpy as np

from userdp import PrivacyBudget, RngStream, UserDataset, noise_variance, open_session
from userdp.concentrated_mean import (
    concentration_score,
    min_users_for_utility,
    outlier_scores,
    selection_probabilities,
)

gen = np.random.default_rng(0)

# %% [markdown]
# Two hundred users sit close together and four sit far away. The score counts
# pairs within tau of each other, normalised by n, so a tight cluster of
# n users scores n.

# %%
n, tau = 204, 1.0
cluster = gen.uniform(-0.3, 0.3, size=(200, 2))
far = np.array([[6.0, 0.0], [0.0, 7.0], [-8.0, 1.0], [5.0, 5.0]])
points = np.vstack([cluster, far])

print(f"score            {concentration_score(points, tau):.1f} (gate sits at 0.8 n = {0.8 * n:.1f})")
print(f"score, cluster   {concentration_score(cluster, tau):.1f}")

# %% [markdown]
# Each user's keep probability depends on how many users are within 2 tau.
# Cluster members keep with probability one; isolated users are dropped.

# %%
p = selection_probabilities(outlier_scores(points, tau), n)
print("keep probability, cluster:", np.unique(p[:200]))
print("keep probability, far:    ", p[200:])

# %% [markdown]
# A session answers adaptive queries. Each query maps a user's items to one
# vector; here the user's single item is returned unchanged.

# %%
data = UserDataset(points[:, None, :])
budget = PrivacyBudget(1.0, 0.1)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    session = open_session(data, budget, tau, T=3, rng=RngStream(7, 0))
for _ in range(3):
    res = session.query(lambda items: items[:, 0, :], batched=True)
    if res.halted:
        print("halted")
        break
    print(f"estimate {np.round(res.estimate, 3)}  kept {res.selected_count}/{n}")
print(f"cluster mean {np.round(cluster.mean(axis=0), 3)}")
print(f"users needed for the gate to pass reliably: ~{min_users_for_utility(3, 0.1, 1.0):.0f}")

# %% [markdown]
# The Gaussian noise variance depends only on (n, tau, T, epsilon, delta).
# With identical users the empirical variance of many estimates should match.

# %%
sigma2 = noise_variance(10, 1.0, 1, 1.0, 0.1)
same = UserDataset(np.full((10, 1, 1), 0.25))
estimates = []
k = 0
while len(estimates) < 5000:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = open_session(same, budget, 1.0, 1, RngStream(11, k))
    k += 1
    res = s.query(lambda items: items[:, 0, :], batched=True)
    if not res.halted:
        estimates.append(res.estimate[0])
print(f"formula {sigma2:.4f}   empirical {np.var(estimates, ddof=1):.4f}   "
      f"({k - len(estimates)} of {k} sessions halted)")
