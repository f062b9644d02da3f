import json


def load_config(path):
    """Reads a JSON config file into a dict."""
    with open(path) as f:
        return json.load(f)


def merge(a, b):
    """Shallow-merges dict b over dict a."""
    out = dict(a)
    out.update(b)
    return out


def raw_lines(path):
    with open(path) as f:
        return f.readlines()
