"""Learners CMAB-RL is compared against

- :class:`IupPolicy` partitions the joint context-arm space into equal
  hypercubes and runs UCB over the cubes of the current context cell.
- :class:`ChooPolicy` grows a binary tree over the joint space and
  descends it along the children that contain the context (contextual,
  depth-truncated HOO).
- :class:`UniformPolicy` ignores everything and draws arms uniformly.
"""
import itertools
import logging
import math

import numpy as np

from cmab.core import Policy, as_arm, as_context
from cmab.partition import ceil_root, cell_indices


def iup_m(horizon, d_x, d_a):
    """Partition number ⌈T^(1 / (2 + d_x + d_a))⌉ of IUP

    :rtype: int
    """
    if horizon < 1:
        raise ValueError(f"Horizon must be at least 1 (got {horizon!r})")
    return ceil_root(horizon, 2 + d_x + d_a)


def ucb_index(means, counts, t, multiplier):
    """mean + multiplier·sqrt(2·ln(t) / N), +inf where N is 0"""
    counts = np.asarray(counts)
    with np.errstate(divide="ignore"):
        bonus = multiplier * np.sqrt(2.0 * math.log(max(t, 1)) / counts)
    return np.where(counts > 0, means + bonus, np.inf)


def _pick_max(values, rng):
    best = np.flatnonzero(values == values.max())
    if best.size == 1:
        return int(best[0])
    return int(rng.choice(best))


class IupPolicy(Policy):
    """UCB over a uniform partition of [0, 1]^(d_x + d_a)

    Cube statistics are stored per context cell, as two arrays over the
    m^d_a arm cubes, and only for context cells that were visited.
    """

    name = "iup"

    def __init__(self, d_x, d_a, horizon, multiplier=1.0, *, seed=0):
        super().__init__(d_x, d_a, seed=seed)
        if not multiplier > 0:
            raise ValueError(f"Confidence multiplier: {multiplier!r}")
        self.multiplier = multiplier
        self.m = iup_m(horizon, d_x, d_a)
        grid = np.array(
            list(itertools.product(range(self.m), repeat=d_a)), dtype=float
        )
        self.centers = (grid + 0.5) / self.m
        self.t = 0
        self.cells = {}
        logging.info(
            "IUP: m=%r, %r arm cubes per context cell",
            self.m,
            len(self.centers),
        )

    def _context_cell(self, context):
        x = as_context(context, self.d_x)
        return tuple(int(k) for k in cell_indices(x, self.m))

    def _stats(self, cell):
        if cell not in self.cells:
            n_cubes = len(self.centers)
            self.cells[cell] = (
                np.zeros(n_cubes, dtype=np.int64),
                np.zeros(n_cubes),
            )
        return self.cells[cell]

    def choose(self, context):
        self.t += 1
        cell = self._context_cell(context)
        stats = self.cells.get(cell)
        if stats is None:
            cube = int(self.rng.integers(len(self.centers)))
        else:
            counts, means = stats
            cube = _pick_max(
                ucb_index(means, counts, self.t, self.multiplier), self.rng
            )
        return self.centers[cube].copy()

    def learn(self, context, arm, reward):
        cell = self._context_cell(context)
        arm = as_arm(arm, self.d_a)
        cube = int(
            np.ravel_multi_index(
                tuple(cell_indices(arm, self.m)), (self.m,) * self.d_a
            )
        )
        counts, means = self._stats(cell)
        means[cube] = (means[cube] * counts[cube] + reward) / (
            counts[cube] + 1
        )
        counts[cube] += 1

    def reset(self, seed):
        super().reset(seed)
        self.t = 0
        self.cells = {}


class ChooNode:
    """Box of the joint context-arm space with its HOO statistics

    Unvisited nodes have infinite U- and B-values.
    """

    __slots__ = (
        "depth",
        "lower",
        "upper",
        "count",
        "mean",
        "u_value",
        "b_value",
        "children",
    )

    def __init__(self, depth, lower, upper):
        self.depth = depth
        self.lower = lower
        self.upper = upper
        self.count = 0
        self.mean = 0.0
        self.u_value = math.inf
        self.b_value = math.inf
        self.children = [None, None]

    @property
    def split_dim(self):
        """Longest edge, lowest index on ties"""
        return int(np.argmax(self.upper - self.lower))

    def child_region(self, k):
        """Lower (k=0) or upper (k=1) half of the box along `split_dim`"""
        dim = self.split_dim
        middle = 0.5 * (self.lower[dim] + self.upper[dim])
        lower, upper = self.lower.copy(), self.upper.copy()
        if k == 0:
            upper[dim] = middle
        else:
            lower[dim] = middle
        return lower, upper

    def make_child(self, k):
        if self.children[k] is not None:
            raise ValueError(f"Child {k} of {self!r} already exists")
        lower, upper = self.child_region(k)
        self.children[k] = ChooNode(self.depth + 1, lower, upper)
        return self.children[k]

    def __repr__(self):
        return (
            f"ChooNode(depth={self.depth}, lower={self.lower.tolist()}, "
            f"upper={self.upper.tolist()})"
        )


def _contains_context(lower, upper, x):
    d_x = x.shape[0]
    return bool(np.all(lower[:d_x] <= x) and np.all(x <= upper[:d_x]))


class ChooPolicy(Policy):
    """Contextual HOO, truncated at depth ⌈log(T) / (2·log(1/ρ))⌉

    With D = d_x + d_a, v1 = 2·sqrt(D) and ρ = 2^(-1/D).
    """

    name = "choo"

    def __init__(self, d_x, d_a, horizon, multiplier=1.0, *, seed=0):
        super().__init__(d_x, d_a, seed=seed)
        if horizon < 1:
            raise ValueError(f"Horizon must be at least 1 (got {horizon!r})")
        if not multiplier > 0:
            raise ValueError(f"Confidence multiplier: {multiplier!r}")
        dim = d_x + d_a
        self.multiplier = multiplier
        self.v1 = 2.0 * math.sqrt(dim)
        self.rho = 2.0 ** (-1.0 / dim)
        self.depth_cap = max(
            1, math.ceil(math.log(horizon) / (2.0 * math.log(1.0 / self.rho)))
        )
        self.reset(seed)
        logging.info(
            "C-HOO: v1=%r, rho=%r, depth cap %r",
            self.v1,
            self.rho,
            self.depth_cap,
        )

    def reset(self, seed):
        super().reset(seed)
        dim = self.d_x + self.d_a
        self.root = ChooNode(0, np.zeros(dim), np.ones(dim))
        self.t = 0
        self.node_count = 1
        self._path = None
        self._capped = False

    def descend(self, context):
        """Walk down the tree along the children containing the context

        At the first node with a feasible child slot still empty, that
        child is created (a random one if both are empty) and the walk
        stops. Otherwise the walk moves to the feasible child with the
        highest B-value. It also stops at the depth cap.

        :return: (path from the root, newly created leaf or None, arm)
        :rtype: tuple[list[ChooNode], ChooNode | None, numpy.ndarray]
        """
        x = as_context(context, self.d_x)
        node = self.root
        path = [node]
        leaf = None
        while node.depth < self.depth_cap:
            feasible = [
                k
                for k in (0, 1)
                if _contains_context(*node.child_region(k), x)
            ]
            missing = [k for k in feasible if node.children[k] is None]
            if missing:
                if len(missing) == 1:
                    k = missing[0]
                else:
                    k = self.rng.choice(missing)
                leaf = node.make_child(int(k))
                self.node_count += 1
                path.append(leaf)
                break
            b_values = np.array([node.children[k].b_value for k in feasible])
            node = node.children[feasible[_pick_max(b_values, self.rng)]]
            path.append(node)

        end = path[-1]
        lower, upper = end.lower[self.d_x :], end.upper[self.d_x :]
        if leaf is None:
            if not self._capped:
                logging.warning(
                    "C-HOO: tree reached its depth cap %r", self.depth_cap
                )
                self._capped = True
            arm = 0.5 * (lower + upper)
        else:
            arm = lower + (upper - lower) * self.rng.random(self.d_a)
        return path, leaf, arm

    def update(self, path, reward):
        """Fold a reward into the nodes of a path, then back up B-values
        from the end of the path to the root"""
        for node in path:
            node.mean = (node.mean * node.count + reward) / (node.count + 1)
            node.count += 1
        log_t = math.log(max(self.t, 1))
        for node in path:
            node.u_value = (
                node.mean
                + self.multiplier * math.sqrt(2.0 * log_t / node.count)
                + self.v1 * self.rho**node.depth
            )
        for node in reversed(path):
            children_b = [
                math.inf if child is None else child.b_value
                for child in node.children
            ]
            node.b_value = min(node.u_value, max(children_b))

    def choose(self, context):
        self.t += 1
        path, _, arm = self.descend(context)
        self._path = path
        return arm

    def learn(self, context, arm, reward):
        if self._path is None:
            raise ValueError("learn was called without a pending choose")
        self.update(self._path, reward)
        self._path = None

    def nodes(self):
        """Every node of the tree, parents before children"""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(c for c in reversed(node.children) if c is not None)


class UniformPolicy(Policy):
    """Arms drawn uniformly from [0, 1]^d_a, whatever the context"""

    name = "uniform"

    def choose(self, context):
        return self.rng.random(self.d_a)

    def learn(self, context, arm, reward):
        pass
