import os

# keep BLAS single-threaded before numpy initializes it (see vidsal/__init__)
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
