"""Most probable paths of anisotropic Brownian motions on Riemannian manifolds."""
import os

# MPP_THREADS caps worker threads; it has to act before jax and BLAS start.
_threads = os.environ.get("MPP_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)
    os.environ.setdefault(
        "XLA_FLAGS",
        f"--xla_cpu_multi_thread_eigen={'true' if int(_threads) > 1 else 'false'} "
        f"intra_op_parallelism_threads={_threads}",
    )

import jax  # noqa: E402

# Tolerances throughout the package (1e-10 frame drift, 1e-12 elliptic
# identities) need double precision.
jax.config.update("jax_enable_x64", True)

from .errors import (  # noqa: E402
    ConfigError,
    DomainError,
    IntegrationError,
    MppError,
    NumericalError,
    UnsupportedManifoldError,
)
from .geometry import (  # noqa: E402
    Euclidean,
    Hyperbolic,
    Manifold,
    OrthoFrame,
    Sphere,
    Torus,
    curvature_in_frame,
    manifold_from_config,
    metric,
    parallel_transport_step,
    riemannian_distance,
    riemannian_geodesic,
)
from .records import PathRecord, sup_distance  # noqa: E402

__version__ = "0.1.0"
