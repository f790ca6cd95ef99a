from django.db import models


class ReferenceSolution(models.Model):
    """High-precision solution cached per instance hash

    primal and dual hold raw float64 bytes.
    """

    instance_hash = models.CharField(max_length=64, unique=True)
    tolerance = models.FloatField()
    primal = models.BinaryField()
    dual = models.BinaryField()
    iterations = models.BigIntegerField(default=0)
    created_date = models.DateTimeField(auto_now_add=True)

    @property
    def num_variables(self):
        """num_variables property of a cached reference

        Returns:
            int -- Length of the stored primal vector
        """
        return len(bytes(self.primal)) // 8
