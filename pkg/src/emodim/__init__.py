"""Speech emotion recognition via dimensional (arousal/valence/dominance) regression.

Regressors predict a 3-vector in normalized AVD space; mapping models
(Gaussian, KNN, small MLP) turn those vectors into categorical emotion
labels.  The package also ships the evaluation statistics (CCC, recalls,
inter-annotator agreement) and an experiment harness for comparing direct
classification against classification via regression.
"""

__version__ = "0.1.0"
