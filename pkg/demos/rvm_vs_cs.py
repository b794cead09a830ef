"""Variational RVM against l1 basis pursuit on the same underdetermined problem."""

# %%
import numpy as np

from pcrvm import rvm
from pcrvm.basis import build_index_set, evaluate_design
from pcrvm.bench import make_dataset, make_instance, study_seeds
from pcrvm.cs import CsConfig, fit_cs_design
from pcrvm.metrics import l2_distance, predict, r_squared, sparsity_index

inst = make_instance(10, 11)
seeds = study_seeds(11)
spec = build_index_set(10, 3)
Xi, y = make_dataset(inst, 150, seeds["train"])  # fewer samples than the 286 terms
Xv, yv = make_dataset(inst, 5000, seeds["valid"])
design = evaluate_design(spec, Xi)

# %% both fits
bayes = rvm.fit_design(design, y, rvm.PriorConfig(c=0.2)).pce
l1 = fit_cs_design(design, y, CsConfig())
print("basis pursuit converged", l1.metadata["converged"], "in", l1.metadata["iterations"], "iterations")

# %% accuracy and sparsity
# probability above 0.95 for the RVM, |w| above 8e-4 for basis pursuit
for name, pce, t in (("rvm", bayes, 0.95), ("cs", l1, None)):
    print(f"{name:>4}  R2 {r_squared(predict(pce, Xv), yv):.4f}  significant {sparsity_index(pce, t):.1f}%")
print("squared L2 distance between the two surrogates", l2_distance(bayes, l1))

# %% where the two disagree most
gap = np.abs(bayes.coefficients - l1.coefficients)
for i in np.argsort(gap)[::-1][:5]:
    print(f"{str(spec.indices[i]):>32}  rvm {bayes.coefficients[i]:+.4f}  cs {l1.coefficients[i]:+.4f}")
