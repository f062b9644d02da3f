def shout(s):
    """Uppercases s and appends an exclamation mark."""
    def inner(t):
        return t.upper()
    return inner(s) + "!"


def repeat(s, n):
    '''Repeats s exactly n times.'''
    return s * n


def untouched(s):
    return s
