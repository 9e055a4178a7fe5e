"""
Confusion matrices and accuracy
===============================

Accuracy is (TP + TN) / (FP + TN + TP + FN).  With few positives it can
look good while most pockets are missed, so recall is printed as well.
"""

import numpy as np

from pocketnet import ConfusionMatrix, accuracy, confusion, format_report

# three reported evaluations of 8008 images each, as FP FN TP TN
for fp, fn, tp, tn in [(201, 462, 1037, 6308), (76, 777, 597, 6558), (15, 1122, 193, 6678)]:
    cm = ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)
    print(format_report(cm), f"recall {cm.recall():.4f}\n")

# a predictor that never fires still scores 81% on an 18.7% positive set
labels = np.r_[np.ones(187), np.zeros(813)]
cm = confusion(np.zeros(1000), labels)
print(f"all-negative: accuracy {accuracy(cm):.3f}, recall {cm.recall():.3f}")

# probabilities exactly at the threshold count as positive
print(confusion([0.5, 0.4999], [1, 1], threshold=0.5))
