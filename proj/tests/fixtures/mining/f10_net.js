// Joins base and path with exactly one slash.
function joinUrl(base, path) {
    const left = base.endsWith("/") ? base.slice(0, -1) : base;
    const right = path.startsWith("/") ? path.slice(1) : path;
    return left + "/" + right;
}

async function probe(url) {
    return fetch(url).then((r) => r.status);
}

// Percent-encodes the query value v.
function encodeValue(v) {
    return encodeURIComponent(String(v));
}
