import math


def add(a, b):
    """Adds two numbers."""
    return a + b


def scale(v, k):
    """Multiplies every element of v by k."""
    return [x * k for x in v]


def magnitude(v):
    """Euclidean norm of a vector.

    Works for any iterable of numbers.
    """
    return math.sqrt(sum(x * x for x in v))


def _helper(x):
    return x + 1
