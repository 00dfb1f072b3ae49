"""Discretization of the context and arm spaces

Dimension tuples are sorted tuples of 0-based coordinate indices. Each
coordinate of [0, 1] is split into m intervals, the first closed and
the others left-open: [0, 1/m], (1/m, 2/m], ..., ((m-1)/m, 1].
"""
import dataclasses
import itertools
import math
import typing

import numpy as np

from cmab.constants import UNUSED_ARM_COORDINATE


class CellKey(typing.NamedTuple):
    """One cell of the partition of a tuple's coordinate subspace"""

    dims: tuple
    intervals: tuple


class CellStats(typing.NamedTuple):
    count: int = 0
    mean: float = 0.0


def check_tuple(dims, d):
    """Validate a dimension tuple against an ambient dimension

    :param dims: Coordinate indices
    :type dims: Iterable[int]
    :param d: Ambient dimension
    :type d: int

    :raises ValueError: Indices are unsorted, repeated or out of range

    :return: The tuple
    :rtype: tuple[int, ...]
    """
    dims = tuple(int(i) for i in dims)
    if any(a >= b for a, b in zip(dims, dims[1:])):
        raise ValueError(f"Tuple {dims} must be strictly increasing")
    if dims and (dims[0] < 0 or dims[-1] >= d):
        raise ValueError(f"Tuple {dims} has indices outside [0, {d})")
    return dims


def enumerate_tuples(d, size):
    """All `size`-subsets of range(d), in lexicographic order

    :rtype: list[tuple[int, ...]]
    """
    if not 1 <= size <= d:
        raise ValueError(f"Tuple size must be in [1, {d}] (got {size})")
    return list(itertools.combinations(range(d), size))


def supertuples(v, size, d):
    """All `size`-tuples of range(d) that contain `v`, in lexicographic
    order

    :rtype: list[tuple[int, ...]]
    """
    v = check_tuple(v, d)
    if not len(v) <= size <= d:
        raise ValueError(
            f"Cannot extend {v} to size {size} in dimension {d}"
        )
    others = [i for i in range(d) if i not in v]
    extended = (
        tuple(sorted(v + extra))
        for extra in itertools.combinations(others, size - len(v))
    )
    return sorted(extended)


def merge_tuple(v, c, size, d):
    """Smallest-index completion of v ∪ c to a `size`-tuple

    When v and c overlap, the union is padded with the smallest indices
    it doesn't contain yet.

    :param v: First tuple
    :type v: tuple[int, ...]
    :param c: Second tuple
    :type c: tuple[int, ...]
    :param size: Size of the result
    :type size: int
    :param d: Ambient dimension
    :type d: int

    :rtype: tuple[int, ...]
    """
    union = set(check_tuple(v, d)) | set(check_tuple(c, d))
    if len(union) > size or size > d:
        raise ValueError(f"Cannot fit {v} and {c} in a {size}-tuple")
    padding = (i for i in range(d) if i not in union)
    while len(union) < size:
        union.add(next(padding))
    return tuple(sorted(union))


def ceil_root(value, degree):
    """Smallest positive integer m with m**degree >= value

    Exact for integer inputs, unlike ``math.ceil(value ** (1 / degree))``
    which overshoots on perfect powers such as 10**5 with degree 5.

    :rtype: int
    """
    if value < 1:
        raise ValueError(f"Expected a value of at least 1 (got {value!r})")
    root = max(1, math.ceil(value ** (1.0 / degree)))
    while root > 1 and (root - 1) ** degree >= value:
        root -= 1
    while root**degree < value:
        root += 1
    return root


def cell_index(value, m):
    """Index of the interval of [0, 1] that contains `value`

    :param value: Coordinate value, in [0, 1]
    :type value: float
    :param m: Number of intervals
    :type m: int

    :raises ValueError: `value` outside [0, 1]

    :rtype: int
    """
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"Value {value!r} is outside [0, 1]")
    return int(cell_indices(np.array([value], dtype=float), m)[0])


def cell_indices(values, m):
    """Vectorized :func:`cell_index` for values already known to be in
    [0, 1]

    :rtype: numpy.ndarray
    """
    values = np.asarray(values, dtype=float)
    index = np.clip(np.ceil(values * m).astype(np.int64) - 1, 0, m - 1)
    # Snap to the float boundaries k / m so that a value equal to a
    # boundary always lands in the interval it closes
    index = np.where(
        (index > 0) & (values <= index / m), index - 1, index
    )
    index = np.where(
        (index < m - 1) & (values > (index + 1) / m), index + 1, index
    )
    return index


def cell_key(x, w, m):
    """Cell of the partition of tuple `w`'s subspace that contains `x`

    :param x: Context
    :type x: numpy.ndarray
    :param w: Dimension tuple
    :type w: tuple[int, ...]
    :param m: Partition number
    :type m: int

    :rtype: CellKey
    """
    x = np.asarray(x, dtype=float)
    w = check_tuple(w, x.shape[0])
    intervals = tuple(int(cell_index(x[i], m)) for i in w)
    return CellKey(w, intervals)


class StatsStore:
    """Sample means and counters per (arm, cell), created on first touch

    Missing entries read as CellStats(0, 0.0). Each touched cell holds
    one counter and one mean per arm so that all arms of a cell can be
    read at once. `len` counts the entries with a nonzero counter, while
    `allocated` counts the entries held in memory, n_arms per touched
    cell.
    """

    __slots__ = ("n_arms", "_blocks", "_entries")

    def __init__(self, n_arms):
        self.n_arms = n_arms
        self._blocks = {}
        self._entries = 0

    def get(self, y, key):
        block = self._blocks.get(key)
        if block is None:
            return CellStats()
        counts, means = block
        return CellStats(int(counts[y]), float(means[y]))

    def block(self, key):
        """Counters and means of every arm in a cell

        :return: (counts, means) arrays of length n_arms, or None if no
            arm was ever updated in the cell
        :rtype: tuple[numpy.ndarray, numpy.ndarray] | None
        """
        return self._blocks.get(key)

    def update(self, y, key, reward):
        block = self._blocks.get(key)
        if block is None:
            block = (
                np.zeros(self.n_arms, dtype=np.int64),
                np.zeros(self.n_arms, dtype=float),
            )
            self._blocks[key] = block
        counts, means = block
        count = counts[y]
        if count == 0:
            self._entries += 1
        means[y] = (means[y] * count + reward) / (count + 1)
        counts[y] = count + 1

    def put(self, y, key, stats):
        """Overwrite an entry, e.g. when restoring a snapshot"""
        if stats.count < 1:
            raise ValueError(f"Cannot store an empty entry: {stats!r}")
        if self.get(y, key).count == 0:
            self._entries += 1
        if key not in self._blocks:
            self._blocks[key] = (
                np.zeros(self.n_arms, dtype=np.int64),
                np.zeros(self.n_arms, dtype=float),
            )
        counts, means = self._blocks[key]
        counts[y] = stats.count
        means[y] = stats.mean

    def items(self):
        """Iterate over ((arm id, CellKey), CellStats) of touched entries"""
        for key, (counts, means) in self._blocks.items():
            for y in np.flatnonzero(counts):
                stats = CellStats(int(counts[y]), float(means[y]))
                yield (int(y), key), stats

    def __len__(self):
        return self._entries

    @property
    def cell_count(self):
        return len(self._blocks)

    @property
    def allocated(self):
        return self.cell_count * self.n_arms


def stats_update(store, y, key, reward):
    """Fold one reward into the sample mean of arm `y` in cell `key`

    :return: The same store
    :rtype: StatsStore
    """
    store.update(y, key, reward)
    return store


@dataclasses.dataclass(frozen=True)
class DiscretizedArmSet:
    """Finite arm catalog built from the cells of the arm partitions

    `cells[y]` is the (arm-dimension tuple, interval indices) pair that
    arm `y` represents.
    """

    arms: np.ndarray
    cells: tuple

    def __len__(self):
        return self.arms.shape[0]

    def arm(self, y):
        return self.arms[y].copy()

    def contains(self, y, arm, m):
        """Whether `arm` lies in the cell represented by arm `y`"""
        dims, intervals = self.cells[y]
        return all(
            cell_index(arm[i], m) == k for i, k in zip(dims, intervals)
        )


def generate_arms(d_a, tuple_size, m):
    """Centers of every cell of every `tuple_size`-subspace of the arms

    Arms are ordered by tuple (lexicographic), then by interval indices
    (lexicographic). Coordinates outside the tuple are fixed at 0.5.

    :param d_a: Number of arm dimensions
    :type d_a: int
    :param tuple_size: Size of the arm tuples
    :type tuple_size: int
    :param m: Partition number
    :type m: int

    :rtype: DiscretizedArmSet
    """
    if m < 1:
        raise ValueError(f"Partition number must be positive (got {m})")
    arms = []
    cells = []
    for dims in enumerate_tuples(d_a, tuple_size):
        for intervals in itertools.product(range(m), repeat=tuple_size):
            arm = np.full(d_a, UNUSED_ARM_COORDINATE)
            arm[list(dims)] = (np.array(intervals) + 0.5) / m
            arms.append(arm)
            cells.append((dims, intervals))

    return DiscretizedArmSet(np.array(arms), tuple(cells))
