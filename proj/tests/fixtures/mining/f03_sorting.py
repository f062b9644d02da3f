def bubble(xs):
    """In-place bubble sort, returns xs."""
    n = len(xs)
    for i in range(n):
        for j in range(n - i - 1):
            if xs[j] > xs[j + 1]:
                xs[j], xs[j + 1] = xs[j + 1], xs[j]
    return xs


def is_sorted(xs):
    """True when xs is non-decreasing."""
    return all(a <= b for a, b in zip(xs, xs[1:]))


def argmin(xs):
    """Index of the smallest element."""
    best = 0
    for i, x in enumerate(xs):
        if x < xs[best]:
            best = i
    return best
