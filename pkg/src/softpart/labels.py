"""Binary-string labels for partition regions and tree nodes.

Regions and tree nodes are named by binary strings: the empty string is the
tree root, "0"/"1" its children, and so on. Internally the models index nodes
heap-style (root = 1, children of h are 2h and 2h+1); a node's label is the
binary expansion of its heap index with the leading 1 stripped, which keeps
breadth-first order and numeric order in sync.
"""

ROOT = ""


def length(label: str) -> int:
    """Number of characters, e.g. length("01") == 2, length("") == 0."""
    return len(label)


def bit(label: str, i: int) -> int:
    """The i-th character of a label as an int, 1-based."""
    if not 1 <= i <= len(label):
        raise IndexError(f"bit index {i} out of range for label {label!r}")
    return int(label[i - 1])


def prefix(label: str, i: int) -> str:
    """First i-1 characters: the node at depth i-1 on the path to `label`.

    prefix(r, 1) is the root for any r.
    """
    if not 1 <= i <= len(label) + 1:
        raise IndexError(f"prefix index {i} out of range for label {label!r}")
    return label[: i - 1]


def concat(label: str, suffix: str) -> str:
    return label + suffix


def all_labels(n_bits: int) -> list[str]:
    """All binary strings of a given length, in increasing numeric order."""
    return [format(j, f"0{n_bits}b") if n_bits else ROOT for j in range(2**n_bits)]


def internal_labels(depth: int) -> list[str]:
    """Labels of the 2^d - 1 internal nodes of a depth-d tree, breadth-first."""
    out = []
    for lev in range(depth):
        out.extend(all_labels(lev))
    return out


def heap_index(label: str) -> int:
    """Heap index of a node: 1 for the root, 2h / 2h+1 for children of h."""
    return int("1" + label, 2)


def heap_label(h: int) -> str:
    """Inverse of heap_index."""
    if h < 1:
        raise ValueError(f"heap index must be >= 1, got {h}")
    return format(h, "b")[1:]
