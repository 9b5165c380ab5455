import os

# single-threaded BLAS: the arrays are tiny and thread handoff dominates
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
