"""Irrigation plans as rooted flow trees, and the alpha-irrigation cost.

A :class:`FlowTree` is a finite geometric tree rooted at the origin.  Every
node may carry a point mass; the flux through an edge is the total mass of
the subtree below it, so the plan transports exactly the measure returned by
:meth:`FlowTree.measure`.  The Gilbert energy ``sum flux**alpha * length`` of
any such tree is an upper bound for the irrigation cost, and the radial bound
``int_0^inf mu(|x| >= r)**alpha dr`` is a lower bound.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .measures import DiscreteMeasure, MeasureError, support_radius, total_mass

FERMAT_EPS = 1e-12


class StructuralError(ValueError):
    """A FlowTree that is not a valid irrigation plan."""


@dataclass(frozen=True, eq=False)
class FlowTree:
    positions: np.ndarray
    parent: np.ndarray
    node_mass: np.ndarray
    flux: np.ndarray | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise StructuralError("positions must be a non-empty (n, d) array")
        parent = np.array(self.parent, dtype=np.int64).reshape(-1)
        mass = np.array(self.node_mass, dtype=float).reshape(-1)
        n = pos.shape[0]
        if parent.shape[0] != n or mass.shape[0] != n:
            raise StructuralError("positions, parent and node_mass differ in length")
        if parent[0] != -1:
            raise StructuralError("node 0 must be the root (parent -1)")
        if np.any(pos[0] != 0.0):
            raise StructuralError("the root must sit at the origin")
        if n > 1 and (np.any(parent[1:] < 0) or np.any(parent[1:] >= n)):
            raise StructuralError("parent index out of range")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise StructuralError("node masses must be finite and nonnegative")
        order = _bfs_order(parent)
        if len(order) != n:
            raise StructuralError("parent array does not describe a tree rooted at node 0")
        derived = _subtree_flux(parent, mass, order)
        for name, arr in (("positions", pos), ("parent", parent), ("node_mass", mass), ("_order", order)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.flux is None:
            derived.setflags(write=False)
            object.__setattr__(self, "flux", derived)
        else:
            given = np.array(self.flux, dtype=float).reshape(-1)
            if given.shape[0] != n:
                raise StructuralError("flux has the wrong length")
            given.setflags(write=False)
            object.__setattr__(self, "flux", given)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    def edge_lengths(self) -> np.ndarray:
        lengths = np.zeros(self.n_nodes)
        if self.n_nodes > 1:
            diff = self.positions[1:] - self.positions[self.parent[1:]]
            lengths[1:] = np.linalg.norm(diff, axis=1)
        return lengths

    def check(self, rtol: float = 1e-9) -> None:
        """Raise StructuralError unless every edge flux balances its subtree."""
        derived = _subtree_flux(self.parent, self.node_mass, self._order)
        scale = max(1.0, float(np.max(np.abs(derived), initial=0.0)))
        if np.any(self.flux < 0) or np.any(np.abs(self.flux - derived) > rtol * scale):
            bad = int(np.argmax(np.abs(self.flux - derived)))
            raise StructuralError(
                f"flux conservation violated at node {bad}: "
                f"edge flux {self.flux[bad]!r} vs subtree mass {derived[bad]!r}"
            )

    def measure(self) -> DiscreteMeasure:
        keep = self.node_mass > 0
        return DiscreteMeasure(self.positions[keep], self.node_mass[keep], dim=self.dim)

    def scaled(self, mass_factor: float = 1.0, length_factor: float = 1.0) -> FlowTree:
        """Same topology with masses and positions multiplied by the factors."""
        return FlowTree(self.positions * length_factor, self.parent, self.node_mass * mass_factor)


def _bfs_order(parent: np.ndarray) -> np.ndarray:
    n = parent.shape[0]
    children: list[list[int]] = [[] for _ in range(n)]
    for i in range(1, n):
        children[parent[i]].append(i)
    order = [0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    k = 0
    while k < len(order):
        for c in children[order[k]]:
            if seen[c]:
                return np.array(order[:0], dtype=np.int64)
            seen[c] = True
            order.append(c)
        k += 1
    return np.array(order, dtype=np.int64)


def _subtree_flux(parent: np.ndarray, mass: np.ndarray, order: np.ndarray) -> np.ndarray:
    flux = np.array(mass, dtype=float)
    for i in order[:0:-1]:
        flux[parent[i]] += flux[i]
    return flux


def _weights(flux, alpha: float):
    flux = np.asarray(flux, dtype=float)
    w = np.zeros_like(flux)
    pos = flux > 0
    w[pos] = flux[pos] ** alpha
    return w


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


def gilbert_energy(tree: FlowTree, alpha: float) -> float:
    """``sum_edges flux**alpha * length`` with zero-flux edges contributing 0."""
    _check_alpha(alpha)
    tree.check()
    if tree.n_nodes == 1:
        return 0.0
    w = _weights(tree.flux[1:], alpha)
    return float(np.dot(w, tree.edge_lengths()[1:]))


def star_plan(mu: DiscreteMeasure) -> FlowTree:
    """One straight edge from the origin to every atom."""
    at_origin = np.all(mu.positions == 0.0, axis=1)
    root_mass = float(mu.masses[at_origin].sum())
    pos = np.vstack([np.zeros((1, mu.dim)), mu.positions[~at_origin]])
    n = pos.shape[0]
    parent = np.zeros(n, dtype=np.int64)
    parent[0] = -1
    mass = np.concatenate([[root_mass], mu.masses[~at_origin]])
    return FlowTree(pos, parent, mass)


def radial_lower_bound(mu: DiscreteMeasure, alpha: float) -> float:
    """Exact value of ``int_0^inf mu(|x| >= r)**alpha dr`` for an atomic measure."""
    _check_alpha(alpha)
    if len(mu) == 0:
        return 0.0
    radii = mu.radii
    order = np.argsort(radii, kind="stable")
    r = radii[order]
    # tail[k] = mass of atoms with radius >= r[k] (atoms sorted ascending)
    tail = np.cumsum(mu.masses[order][::-1])[::-1]
    gaps = np.diff(np.concatenate([[0.0], r]))
    return float(np.dot(gaps, _weights(tail, alpha)))


def lower_bound_at(mu: DiscreteMeasure, alpha: float, r: float) -> float:
    """``r * mu(|x| >= r)**alpha``."""
    _check_alpha(alpha)
    if not r > 0:
        raise MeasureError("lower_bound_at needs r > 0")
    m = float(mu.masses[mu.radii >= r].sum())
    return r * m**alpha if m > 0 else 0.0


# ---------------------------------------------------------------------------
# weighted Fermat points
# ---------------------------------------------------------------------------


def _vertex_optimal(points: np.ndarray, w: np.ndarray, j: int) -> bool:
    """True if ``points[j]`` minimizes ``sum_k w_k |x - p_k|``."""
    diff = points - points[j]
    dist = np.linalg.norm(diff, axis=1)
    mask = (dist > 0) & (np.arange(len(points)) != j)
    pull = (w[mask, None] * diff[mask] / dist[mask, None]).sum(axis=0)
    # weight of every point sitting on top of p_j counts towards its pin
    pin = w[dist == 0].sum()
    return np.linalg.norm(pull) <= pin * (1 + 1e-12)


def weighted_fermat_point(points, weights, tol: float = 1e-12, max_iter: int = 500):
    """Minimizer of ``sum_k w_k |x - p_k|`` (vertex check, then Weiszfeld)."""
    points = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    for j in np.argsort(-w, kind="stable"):
        if w[j] > 0 and _vertex_optimal(points, w, j):
            return points[j].copy()
    x = (w[:, None] * points).sum(axis=0) / w.sum()
    for _ in range(max_iter):
        dist = np.sqrt(((points - x) ** 2).sum(axis=1) + FERMAT_EPS**2)
        c = w / dist
        x_new = (c[:, None] * points).sum(axis=0) / c.sum()
        if np.linalg.norm(x_new - x) < tol:
            return x_new
        x = x_new
    return x


def _batch_fermat3(pts: np.ndarray, w: np.ndarray, iters: int = 60) -> np.ndarray:
    """Vectorized weighted Fermat point of B three-point problems.

    pts: (B, 3, d), w: (B, 3).  Returns (B, d).
    """
    B = pts.shape[0]
    out = np.empty((B, pts.shape[2]))
    done = np.zeros(B, dtype=bool)
    for j in range(3):
        diff = pts - pts[:, j : j + 1, :]
        dist = np.linalg.norm(diff, axis=2)
        safe = np.where(dist > 0, dist, 1.0)
        unit = np.where((dist > 0)[..., None], diff / safe[..., None], 0.0)
        pull = np.linalg.norm((w[..., None] * unit).sum(axis=1), axis=1)
        pin = np.where(dist == 0, w, 0.0).sum(axis=1)
        hit = ~done & (pull <= pin * (1 + 1e-12)) & (w[:, j] > 0)
        out[hit] = pts[hit, j]
        done |= hit
    rest = ~done
    if np.any(rest):
        p = pts[rest]
        ww = w[rest]
        x = (ww[..., None] * p).sum(axis=1) / ww.sum(axis=1)[:, None]
        for _ in range(iters):
            dist = np.sqrt(((p - x[:, None, :]) ** 2).sum(axis=2) + FERMAT_EPS**2)
            c = ww / dist
            x = (c[..., None] * p).sum(axis=1) / c.sum(axis=1)[:, None]
        out[rest] = x
    return out


# ---------------------------------------------------------------------------
# mutable working tree used by the heuristics
# ---------------------------------------------------------------------------


class _Work:
    """Editable tree: positions array plus parent/mass lists."""

    def __init__(self, pos: np.ndarray, parent: list[int], mass: list[float]):
        self.pos = np.array(pos, dtype=float)
        self.parent = list(parent)
        self.mass = list(mass)

    @classmethod
    def from_tree(cls, tree: FlowTree) -> _Work:
        return cls(tree.positions, [int(p) for p in tree.parent], [float(m) for m in tree.node_mass])

    def copy(self) -> _Work:
        return _Work(self.pos, self.parent, self.mass)

    def to_tree(self) -> FlowTree:
        return FlowTree(self.pos, np.array(self.parent), np.array(self.mass))

    @property
    def n(self) -> int:
        return len(self.parent)

    def children(self) -> list[list[int]]:
        ch: list[list[int]] = [[] for _ in range(self.n)]
        for i in range(1, self.n):
            ch[self.parent[i]].append(i)
        return ch

    def order(self) -> list[int]:
        ch = self.children()
        order = [0]
        k = 0
        while k < len(order):
            order.extend(ch[order[k]])
            k += 1
        return order

    def flux(self, order=None) -> np.ndarray:
        order = self.order() if order is None else order
        f = np.array(self.mass, dtype=float)
        for i in reversed(order[1:]):
            f[self.parent[i]] += f[i]
        return f

    def energy(self, alpha: float) -> float:
        if self.n == 1:
            return 0.0
        f = self.flux()
        par = np.array(self.parent[1:])
        lengths = np.linalg.norm(self.pos[1:] - self.pos[par], axis=1)
        return float(np.dot(_weights(f[1:], alpha), lengths))

    def steiner(self) -> list[int]:
        return [i for i in range(1, self.n) if self.mass[i] == 0.0]

    def add_node(self, x, parent: int, mass: float = 0.0) -> int:
        self.pos = np.vstack([self.pos, np.asarray(x, dtype=float)[None, :]])
        self.parent.append(parent)
        self.mass.append(mass)
        return self.n - 1

    def delete(self, dead: set[int]) -> None:
        keep = [i for i in range(self.n) if i not in dead]
        remap = {old: new for new, old in enumerate(keep)}
        self.pos = self.pos[keep]
        self.parent = [-1 if i == 0 else remap[self.parent[i]] for i in keep]
        self.mass = [self.mass[i] for i in keep]

    def cleanup(self, same_tol: float) -> None:
        """Drop massless leaves, splice pass-through Steiner nodes and merge
        Steiner nodes that sit on a neighbour.  Never increases the energy."""
        changed = True
        while changed:
            changed = False
            ch = self.children()
            dead: set[int] = set()
            for i in range(1, self.n):
                if self.mass[i] != 0.0 or i in dead:
                    continue
                kids = [c for c in ch[i] if c not in dead]
                p = self.parent[i]
                if not kids:
                    dead.add(i)
                elif len(kids) == 1 or np.linalg.norm(self.pos[i] - self.pos[p]) <= same_tol:
                    for c in kids:
                        self.parent[c] = p
                    dead.add(i)
                else:
                    close = [c for c in kids if np.linalg.norm(self.pos[c] - self.pos[i]) <= same_tol]
                    if close:
                        keep = close[0]
                        self.parent[keep] = p
                        for c in kids:
                            if c != keep:
                                self.parent[c] = keep
                        dead.add(i)
                if i in dead:
                    changed = True
                    break
            if dead:
                self.delete(dead)

    def subtree(self, v: int, ch=None) -> set[int]:
        ch = self.children() if ch is None else ch
        out = {v}
        stack = [v]
        while stack:
            for c in ch[stack.pop()]:
                out.add(c)
                stack.append(c)
        return out


def _relocate(work: _Work, alpha: float, tol: float, max_iter: int, damping: float = 1.0):
    """Joint majorize-minimize update of all Steiner positions.

    Each sweep minimizes the quadratic majorizer ``sum_e w_e |x_a - x_b|^2 /
    (2 l_e)`` of the (eps-regularized) energy over every Steiner point at once,
    then snaps any Steiner point whose local optimum is a neighbour.  Returns
    (sweeps used, converged).
    """
    steiner = np.array(work.steiner(), dtype=np.int64)
    if steiner.size == 0:
        return 0, True
    S = steiner.size
    index = np.full(work.n, -1)
    index[steiner] = np.arange(S)
    child = np.arange(1, work.n)
    par = np.array(work.parent[1:])
    w = _weights(work.flux()[child], alpha)
    ia, ib = index[par], index[child]

    # padded neighbour table for the vertex-optimality snap
    nbr_lists: list[list[int]] = [[] for _ in range(S)]
    nbr_w: list[list[float]] = [[] for _ in range(S)]
    for a, b, we, sa, sb in zip(par, child, w, ia, ib):
        if sa >= 0:
            nbr_lists[sa].append(b)
            nbr_w[sa].append(we)
        if sb >= 0:
            nbr_lists[sb].append(a)
            nbr_w[sb].append(we)
    D = max(len(x) for x in nbr_lists)
    nb = np.zeros((S, D), dtype=np.int64)
    nw = np.zeros((S, D))
    for s in range(S):
        nb[s, : len(nbr_lists[s])] = nbr_lists[s]
        nw[s, : len(nbr_w[s])] = nbr_w[s]

    both = (ia >= 0) & (ib >= 0)
    only_a = (ia >= 0) & (ib < 0)
    only_b = (ib >= 0) & (ia < 0)

    def energy() -> float:
        return float(np.dot(w, np.linalg.norm(work.pos[child] - work.pos[par], axis=1)))

    current = energy()
    sweeps = 0
    converged = False
    while sweeps < max_iter:
        sweeps += 1
        old = work.pos[steiner].copy()
        lengths = np.sqrt(((work.pos[par] - work.pos[child]) ** 2).sum(axis=1) + FERMAT_EPS**2)
        c = w / lengths
        L = np.zeros((S, S))
        rhs = np.zeros((S, work.pos.shape[1]))
        np.add.at(L, (ia[ia >= 0], ia[ia >= 0]), c[ia >= 0])
        np.add.at(L, (ib[ib >= 0], ib[ib >= 0]), c[ib >= 0])
        np.add.at(L, (ia[both], ib[both]), -c[both])
        np.add.at(L, (ib[both], ia[both]), -c[both])
        np.add.at(rhs, ia[only_a], c[only_a, None] * work.pos[child[only_a]])
        np.add.at(rhs, ib[only_b], c[only_b, None] * work.pos[par[only_b]])
        try:
            new = np.linalg.solve(L, rhs)
        except np.linalg.LinAlgError:
            break
        work.pos[steiner] = old + damping * (new - old)
        moved = energy()
        if moved > current * (1 + 1e-13):
            work.pos[steiner] = old
            converged = True
            break
        mm_pos = work.pos[steiner].copy()
        P = work.pos[nb]
        diff = P[:, None, :, :] - P[:, :, None, :]
        dist = np.linalg.norm(diff, axis=3)
        zero = dist == 0
        unit = diff / np.where(zero, 1.0, dist)[..., None]
        pull = np.linalg.norm((nw[:, None, :, None] * unit).sum(axis=2), axis=2)
        pin = (nw[:, None, :] * zero).sum(axis=2)
        ok = (pull <= pin * (1 + 1e-12)) & (nw > 0)
        if np.any(ok):
            k = np.argmax(np.where(ok, nw, -1.0), axis=1)
            snap = ok.any(axis=1)
            work.pos[steiner[snap]] = P[snap, k[snap]]
            snapped = energy()
            if snapped > moved:
                work.pos[steiner] = mm_pos
            else:
                moved = snapped
        current = moved
        if np.max(np.abs(work.pos[steiner] - old)) < tol:
            converged = True
            break
    return sweeps, converged


def relocate_branch_points(tree: FlowTree, alpha: float, tol: float = 1e-10, max_iter: int = 1000):
    """Move every massless non-root node to the weighted Fermat point of its
    neighbours (weights ``flux**alpha``), keeping the topology.

    Returns ``(tree, converged)``.  The energy never increases between sweeps.
    """
    _check_alpha(alpha)
    work = _Work.from_tree(tree)
    _, converged = _relocate(work, alpha, tol, max_iter)
    return work.to_tree(), converged


# ---------------------------------------------------------------------------
# topology search
# ---------------------------------------------------------------------------


def _merge_candidates(work: _Work, alpha: float, flux: np.ndarray):
    ch = work.children()
    triples = []
    for p in range(work.n):
        kids = ch[p]
        for i in range(len(kids)):
            for j in range(i + 1, len(kids)):
                a, b = sorted((kids[i], kids[j]))
                triples.append((p, a, b))
    if not triples:
        return None
    t = np.array(triples)
    pts = work.pos[t]
    fa, fb = flux[t[:, 1]], flux[t[:, 2]]
    w = np.stack([_weights(fa + fb, alpha), _weights(fa, alpha), _weights(fb, alpha)], axis=1)
    s = _batch_fermat3(pts, w)
    new = (w * np.linalg.norm(pts - s[:, None, :], axis=2)).sum(axis=1)
    old = w[:, 1] * np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1) + w[:, 2] * np.linalg.norm(
        pts[:, 2] - pts[:, 0], axis=1
    )
    delta = new - old
    # lowest delta, ties broken by the lowest (node, node) pair
    k = min(range(len(triples)), key=lambda q: (delta[q], triples[q][1], triples[q][2]))
    return delta[k], triples[k], s[k]


def _reattach_candidates(work: _Work, alpha: float, flux: np.ndarray):
    ch = work.children()
    order = work.order()
    par = work.parent
    lengths = np.zeros(work.n)
    lengths[1:] = np.linalg.norm(work.pos[1:] - work.pos[np.array(par[1:])], axis=1)
    best = None
    for v in range(1, work.n):
        fv = flux[v]
        if fv <= 0:
            continue
        sub = work.subtree(v, ch)
        p = par[v]
        # removal: drop edge p->v and lighten the path root..p
        fprime = flux.copy()
        removal = -(fv**alpha) * lengths[v]
        node = p
        while node != 0:
            fprime[node] -= fv
            removal += (_w1(fprime[node], alpha) - _w1(flux[node], alpha)) * lengths[node]
            node = par[node]
        # P[u]: extra cost of pushing fv along the path root..u
        P = np.zeros(work.n)
        for u in order[1:]:
            if u in sub:
                continue
            P[u] = P[par[u]] + (_w1(fprime[u] + fv, alpha) - _w1(fprime[u], alpha)) * lengths[u]
        wv = fv**alpha
        targets = [u for u in range(work.n) if u not in sub and u != p]
        edge_ws = [x for x in range(1, work.n) if x not in sub]
        cands = []
        for u in targets:
            cands.append((removal + P[u] + wv * float(np.linalg.norm(work.pos[v] - work.pos[u])), v, "node", u, None))
        if edge_ws:
            e = np.array(edge_ws)
            up = np.array([par[x] for x in edge_ws])
            pts = np.stack([work.pos[up], work.pos[e], np.repeat(work.pos[v][None, :], len(e), axis=0)], axis=1)
            fw = fprime[e]
            w = np.stack([_weights(fw + fv, alpha), _weights(fw, alpha), np.full(len(e), wv)], axis=1)
            s = _batch_fermat3(pts, w)
            cost = (w * np.linalg.norm(pts - s[:, None, :], axis=2)).sum(axis=1) - w[:, 1] * lengths[e]
            for k, x in enumerate(edge_ws):
                cands.append((removal + P[up[k]] + cost[k], v, "edge", x, s[k]))
        for cand in cands:
            if best is None or (cand[0], cand[1], cand[3]) < (best[0], best[1], best[3]):
                best = cand
    return best


def _w1(f: float, alpha: float) -> float:
    return f**alpha if f > 0 else 0.0


def _apply_reattach(work: _Work, cand) -> None:
    _, v, kind, target, s = cand
    if kind == "node":
        work.parent[v] = target
    else:
        u = work.parent[target]
        node = work.add_node(s, u)
        work.parent[target] = node
        work.parent[v] = node


def _descend(work: _Work, alpha: float, budget: list[int], same_tol: float, reloc_tol: float) -> None:
    """Greedy best-improvement over merge and reattach moves."""
    energy = work.energy(alpha)
    while budget[0] > 0:
        flux = work.flux()
        thr = 1e-12 * max(energy, 1e-300)
        move = _merge_candidates(work, alpha, flux)
        if move is not None and move[0] < -thr:
            _, (p, a, b), s = move
            node = work.add_node(s, p)
            work.parent[a] = node
            work.parent[b] = node
        else:
            cand = _reattach_candidates(work, alpha, flux)
            if cand is None or cand[0] >= -thr:
                break
            _apply_reattach(work, cand)
        used, _ = _relocate(work, alpha, reloc_tol, min(budget[0], 50))
        budget[0] -= max(used, 1)
        work.cleanup(same_tol)
        new_energy = work.energy(alpha)
        assert new_energy <= energy * (1 + 1e-9) + 1e-15, "accepted move increased the energy"
        energy = new_energy


def _random_kick(work: _Work, rng: np.random.Generator) -> None:
    ch = work.children()
    movable = [v for v in range(1, work.n)]
    if not movable:
        return
    v = int(rng.choice(movable))
    sub = work.subtree(v, ch)
    targets = [u for u in range(work.n) if u not in sub and u != work.parent[v]]
    if not targets:
        return
    u = int(rng.choice(targets))
    if u != 0 and rng.random() < 0.5:
        # attach through a fresh branch point at the middle of edge parent(u)->u
        mid = 0.5 * (work.pos[u] + work.pos[work.parent[u]])
        node = work.add_node(mid, work.parent[u])
        work.parent[u] = node
        work.parent[v] = node
    else:
        work.parent[v] = u


def optimize_tree(
    mu: DiscreteMeasure,
    alpha: float,
    budget: int = 400,
    seed: int = 0,
    init: FlowTree | None = None,
    restarts: int = 2,
) -> FlowTree:
    """Heuristic minimizer of the Gilbert energy over trees irrigating ``mu``.

    Starts from ``init`` (default: the star), then alternates greedy
    best-improvement topology moves (sibling merges through a new branch
    point, subtree detach-and-reattach) with branch-point relocation.  Seeded
    random kicks restart the descent; the lowest-energy tree is returned.
    ``budget`` counts relocation sweeps.  Lengths and masses are normalized
    internally, so the result is equivariant under dilation and mass scaling.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"optimize_tree needs 0 < alpha <= 1, got {alpha}")
    start = star_plan(mu) if init is None else init
    if init is not None and init.measure() != mu:
        raise StructuralError("init tree does not irrigate the given measure")
    return _optimize(mu, alpha, budget, seed, start, restarts)[0]


def _optimize(mu, alpha, budget, seed, start: FlowTree, restarts: int) -> tuple[FlowTree, bool]:
    # straight edges are optimal at alpha = 1, so the star needs no search
    if len(mu) == 0 or alpha == 1.0 and np.all(start.parent[1:] == 0):
        return start, True
    scale = support_radius(mu) or 1.0
    mscale = total_mass(mu)
    work = _Work(start.positions / scale, [int(p) for p in start.parent], [float(m) / mscale for m in start.node_mass])
    same_tol = 1e-12
    reloc_tol = 1e-10
    budget_left = [int(budget)]
    rng = np.random.default_rng(seed)

    _relocate(work, alpha, reloc_tol, 50)
    work.cleanup(same_tol)
    _descend(work, alpha, budget_left, same_tol, reloc_tol)
    best, best_e = work.copy(), work.energy(alpha)
    for _ in range(restarts):
        if budget_left[0] <= 0 or len(mu) < 3:
            break
        trial = best.copy()
        _random_kick(trial, rng)
        budget_left[0] -= 1
        _relocate(trial, alpha, reloc_tol, 20)
        trial.cleanup(same_tol)
        _descend(trial, alpha, budget_left, same_tol, reloc_tol)
        e = trial.energy(alpha)
        if e < best_e * (1 - 1e-12):
            best, best_e = trial, e
    converged = False
    if budget_left[0] > 0:
        _, converged = _relocate(best, alpha, reloc_tol, budget_left[0])
        best.cleanup(same_tol)

    pos = best.pos * scale
    mass = np.array(best.mass) * mscale
    # restore exact atom data lost to the normalization round trip
    pos[0] = 0.0
    exact = {tuple(np.round(x / scale, 12)): (x, m) for x, m in mu}
    for i in range(1, best.n):
        if best.mass[i] > 0:
            key = tuple(np.round(best.pos[i], 12))
            if key in exact:
                pos[i], mass[i] = exact[key]
    if np.any(np.all(mu.positions == 0.0, axis=1)):
        mass[0] = float(mu.masses[np.all(mu.positions == 0.0, axis=1)].sum())
    return FlowTree(pos, np.array(best.parent), mass), converged


@dataclass(frozen=True)
class CostBracket:
    upper: float
    lower: float
    tree: FlowTree = field(repr=False)
    alpha: float = 1.0
    converged: bool = True

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "upper": self.upper,
            "lower": self.lower,
            "gap": self.gap,
            "n_nodes": self.tree.n_nodes,
            "converged": self.converged,
        }


def irrigation_cost(mu: DiscreteMeasure, alpha: float, budget: int = 400, seed: int = 0,
                    restarts: int = 2) -> CostBracket:
    _check_alpha(alpha)
    if alpha == 0.0:
        raise ValueError("irrigation_cost needs alpha > 0")
    tree, converged = _optimize(mu, alpha, budget, seed, star_plan(mu), restarts=restarts)
    upper = gilbert_energy(tree, alpha)
    lower = radial_lower_bound(mu, alpha)
    return CostBracket(upper=upper, lower=lower, tree=tree, alpha=alpha, converged=converged)


def union_at_root(a: FlowTree, b: FlowTree) -> FlowTree:
    """Tree irrigating the sum of both target measures; energies add."""
    if a.dim != b.dim:
        raise StructuralError("trees of different dimension")
    off = a.n_nodes - 1
    pos = np.vstack([a.positions, b.positions[1:]])
    parent = np.concatenate([a.parent, np.where(b.parent[1:] == 0, 0, b.parent[1:] + off)])
    mass = np.concatenate([a.node_mass, b.node_mass[1:]])
    mass[0] = a.node_mass[0] + b.node_mass[0]
    return FlowTree(pos, parent, mass)


def halfcircle_plan(r: float, beta: float, n_arcs: int) -> tuple[FlowTree, DiscreteMeasure]:
    """Irrigation of mass ``pi * r**beta`` spread over the upper half circle.

    The half circumference ``{|x| = r, x_2 > 0}`` is cut into ``n_arcs`` equal
    arcs, each carrying ``pi r**beta / n_arcs`` at its midpoint.  The tree runs
    from the origin to ``(-r, 0)`` and then along the chords joining the
    consecutive midpoints.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if n_arcs < 2:
        raise ValueError("n_arcs must be at least 2")
    total = math.pi * r**beta
    theta = math.pi - (np.arange(n_arcs) + 0.5) * math.pi / n_arcs
    mids = r * np.column_stack([np.cos(theta), np.sin(theta)])
    pos = np.vstack([[0.0, 0.0], [-r, 0.0], mids])
    parent = np.arange(-1, n_arcs + 1)
    mass = np.concatenate([[0.0, 0.0], np.full(n_arcs, total / n_arcs)])
    tree = FlowTree(pos, parent, mass)
    return tree, DiscreteMeasure(mids, np.full(n_arcs, total / n_arcs), dim=2)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def emit_tree_csv(tree: FlowTree) -> str:
    d = tree.dim
    out = io.StringIO()
    header = [f"xp{i + 1}" for i in range(d)] + [f"xc{i + 1}" for i in range(d)] + ["flux"]
    out.write(",".join(header) + "\n")
    for i in tree._order[1:]:
        row = list(tree.positions[tree.parent[i]]) + list(tree.positions[i]) + [tree.flux[i]]
        out.write(",".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def parse_tree_csv(text: str) -> FlowTree:
    """Rebuild a FlowTree from :func:`emit_tree_csv` output.

    Node masses are recovered as edge flux minus the flux of child edges.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise StructuralError("empty tree file")
    ncols = len(lines[0].split(","))
    if (ncols - 1) % 2:
        raise StructuralError("tree CSV needs 2d + 1 columns")
    d = (ncols - 1) // 2
    rows = []
    for k, ln in enumerate(lines[1:], start=2):
        fields = ln.split(",")
        if len(fields) != ncols:
            raise StructuralError(f"inconsistent column count at row {k}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise StructuralError(f"non-numeric field at row {k}") from None
    index = {tuple([0.0] * d): 0}
    pos = [np.zeros(d)]
    parent = [-1]
    flux = [0.0]
    for row in rows:
        xp, xc, fl = tuple(row[:d]), tuple(row[d : 2 * d]), row[-1]
        if xp not in index:
            raise StructuralError(f"edge parent {xp} appears before its own edge")
        if xc in index:
            raise StructuralError(f"node {xc} has two parents")
        index[xc] = len(pos)
        pos.append(np.array(xc))
        parent.append(index[xp])
        flux.append(fl)
    flux_arr = np.array(flux)
    mass = flux_arr.copy()
    for i in range(1, len(parent)):
        mass[parent[i]] -= flux_arr[i]
    mass[0] = 0.0
    mass[np.abs(mass) <= 1e-12 * max(1.0, float(flux_arr.max(initial=0.0)))] = 0.0
    return FlowTree(np.array(pos), np.array(parent), mass)


def bracket_json(bracket: CostBracket) -> str:
    return json.dumps(bracket.summary(), sort_keys=True, indent=2)
