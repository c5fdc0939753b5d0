"""ADE-QVAET: software defect prediction toolkit.

Pipeline pieces: CSV ingestion and stratified splitting, ANRA-style
cleaning/augmentation, a statevector-simulated variational encoder, a small
transformer classifier trained through an in-package autodiff core, and an
adaptive differential-evolution hyperparameter tuner, all wired together by a
batch CLI with full seed determinism.
"""

import os

# Pin BLAS to one thread before numpy loads anywhere in-process: the matrices
# here are tiny (threading only adds overhead) and reports must be
# byte-identical across reruns.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

__version__ = "0.1.0"
