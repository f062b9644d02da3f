import asyncio


def area(w, h):
    """Area of a w-by-h rectangle."""
    return w * h


async def fetch_distance(client, a, b):
    """Queries the remote service for the distance from a to b."""
    resp = await client.get(a, b)
    return resp.value
