"""
A five-triad campaign and its statistics
========================================

Five independent triads, then the measures reported for the human study:
accuracy with a binomial test, ROC points, mutual information between the
Receiver and each Sender, and block-wise learning curves compared with a
slope-difference Z.
"""

from brainnet_sim.analysis import report
from brainnet_sim.session import SessionSeeds, run_session

logs = [run_session(seeds=SessionSeeds.derive(2, triad)) for triad in range(5)]
rep = report(logs)

acc = rep.tests["accuracy"]
print(f"mean accuracy {acc['mean']:.4f}, {acc['k']}/{acc['n']} trials, binomial p = {acc['binomial_p']:.2e}")

# %%
for row in rep.roc:
    if row["entity"] == "triad":
        print(f"triad {row['triad']}: tpr {row['tpr']:.2f} fpr {row['fpr']:.2f} auc {row['auc']:.3f}")

# %%
for row in rep.mi:
    print(f"triad {row['triad']} {row['pair']:>13}: MI {row['mi']:.3f} bits (bias {row['bias']:+.3f})")

# %%
# Learning: the Receiver's round-1 decisions against each Sender's, per
# block of four trials pooled over triads.

for row in rep.learning:
    beta = "n/a" if row["beta"] is None else f"{row['beta']:.2f}"
    r = "n/a" if row["r"] is None else f"{row['r']:.2f}"
    print(f"block {row['block']} {row['sender']:>4}: beta {beta}  r {r}")
for measure in ("beta", "r"):
    z = rep.tests[f"trend_{measure}"]["z"]
    print(f"slope difference ({measure}): Z = {z:.2f}" if z is not None else f"{measure}: no trend")
