"""How the Beta prior on the success probability controls sparsity on the O'Hagan function."""

# %%
import numpy as np

from pcrvm import rvm
from pcrvm.basis import build_index_set, evaluate_design
from pcrvm.bench import eval_ohagan, make_dataset, make_instance, study_seeds
from pcrvm.metrics import moments, predict, r_squared, sparsity_index

# a 10-dimensional instance; coefficients of the last three inputs are large
inst = make_instance(10, 3)
seeds = study_seeds(3)
print("a1", np.round(inst.a1, 2))
print("f(0) =", eval_ohagan(inst, np.zeros(10)))

# %% training and validation data, order-3 basis (286 terms)
Xi, y = make_dataset(inst, 300, seeds["train"])
Xv, yv = make_dataset(inst, 5000, seeds["valid"])
spec = build_index_set(10, 3)
design = evaluate_design(spec, Xi)

# %% a small c favours switching terms off
for c in (0.2, 0.6, 1.0):
    res = rvm.fit_design(design, y, rvm.PriorConfig(c=c))
    pce = res.pce
    p = pce.success_prob
    print(
        f"c={c:.1f}  active>0.95 {sparsity_index(pce, 0.95):5.2f}%  "
        f"undecided {int(np.sum((p > 0.01) & (p < 0.95)))}  "
        f"R2 {r_squared(predict(pce, Xv), yv):.4f}  sweeps {res.sweeps}"
    )

# %% moments come straight from the coefficients
mo = moments(pce, n_mc=20_000, seed=seeds["mc"])
print(f"mean {mo['mean']:.3f}  std {mo['std']:.3f}  skew {mo['skewness']:.3f}  kurt {mo['kurtosis']:.3f}")
print(f"direct MC mean {np.mean(yv):.3f}  std {np.std(yv, ddof=1):.3f}")
