"""Reference solutions cached in the database, keyed by instance hash"""

import logging

import numpy as np

from nashlabapi.models import ReferenceSolution as StoredReference
from nashlabapi.numerics.solvers import ReferenceSolution

logger = logging.getLogger(__name__)


class OrmReferenceCache:
    def get(self, key):
        stored = StoredReference.objects.filter(instance_hash=key).first()
        if stored is None:
            logger.info("reference cache miss for %s", key[:12])
            return None
        return ReferenceSolution(
            x=np.frombuffer(bytes(stored.primal), dtype=np.float64).copy(),
            lam=np.frombuffer(bytes(stored.dual), dtype=np.float64).copy(),
            iterations=stored.iterations,
            tolerance=stored.tolerance,
        )

    def put(self, key, solution):
        StoredReference.objects.update_or_create(
            instance_hash=key,
            defaults={
                "tolerance": solution.tolerance,
                "primal": np.asarray(solution.x, dtype=np.float64).tobytes(),
                "dual": np.asarray(solution.lam, dtype=np.float64).tobytes(),
                "iterations": solution.iterations,
            },
        )
