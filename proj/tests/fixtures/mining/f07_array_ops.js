/** Sums the elements of xs. */
function sum(xs) {
    let total = 0;
    for (const x of xs) {
        total += x;
    }
    return total;
}

/** Returns a new array with xs reversed. */
function reversed(xs) {
    return xs.slice().reverse();
}

/**
 * Splits xs into chunks of size n.
 * The final chunk may be shorter.
 */
function chunk(xs, n) {
    const out = [];
    for (let i = 0; i < xs.length; i += n) {
        out.push(xs.slice(i, i + n));
    }
    return out;
}

function unexported(xs) {
    return xs.length;
}
