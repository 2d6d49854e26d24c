"""
Equal error rate from raw scores
================================

The EER is where false acceptance and false rejection meet. The fast
rank-based estimate agrees with a brute-force threshold sweep.
"""
import numpy as np

from pinhole import asv

rng = np.random.default_rng(0)
for shift in (0.0, 1.0, 2.0, 4.0):
    scores = asv.ScoreSet.from_arrays(rng.normal(shift, 1, 300), rng.normal(0, 1, 3000))
    res = asv.eer(scores)
    print(f"target shift {shift:.1f}: EER {100 * res.eer:6.2f}%  "
          f"(brute force {100 * asv.oracle_eer(scores):6.2f}%)  threshold {res.threshold:+.3f}")

# a small hand case: one target below one nontarget gives EER 1/3
hand = asv.ScoreSet.from_arrays([0.9, 0.7, 0.4], [0.8, 0.3, 0.2])
print("hand case EER:", asv.eer(hand).eer)
