"""Independent reference implementations used to cross-check the solvers.

Everything here is deliberately written with different machinery than the
package code: python dicts and BFS for the node decomposition, a full
(singular) Laplacian solved with lstsq instead of a reduced dense solve.
Slow and obvious beats fast and clever for an oracle.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from gridtopo.grid_model import DISABLED, GridTopology


def oracle_dc_flows(grid: GridTopology, topology, gen_p, load_p):
    """Reference DC solve. Returns (flow per line, islanded load MW).

    Nodes are (substation, busbar) pairs discovered by scanning objects one
    by one; components found by BFS; each generator-bearing component gets
    its imbalance assigned to the slack node (lowest slot id with a
    generator) and is solved as a singular system via lstsq.
    """
    topo = np.asarray(topology)
    nodes: dict[tuple[int, int], int] = {}

    def node_of(sub: int, busbar: int) -> int:
        key = (int(sub), int(busbar))
        if key not in nodes:
            nodes[key] = len(nodes)
        return nodes[key]

    gen_nodes = []
    for g in grid.generators:
        bus = topo[grid.gen_index[g.id]]
        gen_nodes.append(node_of(g.substation, bus))
    load_nodes = []
    for l in grid.loads:
        bus = topo[grid.load_index[l.id]]
        load_nodes.append(node_of(l.substation, bus))

    line_nodes = {}
    for line in grid.lines:
        bus_or = topo[grid.line_or_index[line.id]]
        bus_ex = topo[grid.line_ex_index[line.id]]
        if bus_or == DISABLED or bus_ex == DISABLED:
            continue
        line_nodes[line.id] = (
            node_of(line.from_substation, bus_or),
            node_of(line.to_substation, bus_ex),
        )

    n = len(nodes)
    p = np.zeros(n)
    for g, node in zip(grid.generators, gen_nodes):
        p[node] += gen_p[g.id]
    for l, node in zip(grid.loads, load_nodes):
        p[node] -= load_p[l.id]

    adjacency = defaultdict(list)
    for a, b in line_nodes.values():
        adjacency[a].append(b)
        adjacency[b].append(a)

    # BFS components
    component = -np.ones(n, dtype=int)
    n_comp = 0
    for start in range(n):
        if component[start] >= 0:
            continue
        queue = [start]
        component[start] = n_comp
        while queue:
            u = queue.pop()
            for v in adjacency[u]:
                if component[v] < 0:
                    component[v] = n_comp
                    queue.append(v)
        n_comp += 1

    # slot id used only to break slack ties the same way the solver does
    slot = np.empty(n, dtype=int)
    for (sub, busbar), node in nodes.items():
        slot[node] = 2 * sub + (busbar - 1)

    theta = np.zeros(n)
    islanded = 0.0
    for c in range(n_comp):
        members = np.flatnonzero(component == c)
        gens_here = [node for node in gen_nodes if component[node] == c]
        if not gens_here:
            load_here = -p[members].sum()
            if load_here > 0:
                islanded += load_here
            continue
        slack = min(gens_here, key=lambda node: slot[node])
        rhs = p[members].copy()
        rhs[np.flatnonzero(members == slack)[0]] -= p[members].sum()
        lap = np.zeros((len(members), len(members)))
        pos = {int(m): k for k, m in enumerate(members)}
        for line_id, (a, b) in line_nodes.items():
            if component[a] != c:
                continue
            bv = grid.lines[line_id].susceptance
            ia, ib = pos[a], pos[b]
            lap[ia, ia] += bv
            lap[ib, ib] += bv
            lap[ia, ib] -= bv
            lap[ib, ia] -= bv
        sol, *_ = np.linalg.lstsq(lap, rhs, rcond=None)
        theta[members] = sol - sol[pos[slack]]

    flow = np.zeros(len(grid.lines))
    for line_id, (a, b) in line_nodes.items():
        flow[line_id] = grid.lines[line_id].susceptance * (theta[a] - theta[b])
    return flow, islanded


def brute_force_substation_configs(grid: GridTopology, substation: int,
                                   exclude_lone_endpoint: bool = False):
    """Exhaustively enumerate valid busbar assignments for one substation.

    Walks all 2^n raw assignments, folds mirror pairs by keeping whichever
    tuple pins the first object to busbar 1, and drops assignments where a
    busbar carries a generator or load but no line endpoint.  Returns a list
    of tuples sorted lexicographically.
    """
    from itertools import product

    objs = grid.objects_at(substation)
    kinds = [grid.object_order[k].kind for k in objs]
    seen = set()
    for raw in product((1, 2), repeat=len(objs)):
        mirror = tuple(3 - b for b in raw)
        pick = raw if raw[0] == 1 else mirror
        if pick in seen:
            continue
        ok = True
        for busbar in (1, 2):
            injections = sum(1 for k, b in zip(kinds, pick)
                             if b == busbar and k in ("gen", "load"))
            endpoints = sum(1 for k, b in zip(kinds, pick)
                            if b == busbar and k in ("line_or", "line_ex"))
            if injections >= 1 and endpoints == 0:
                ok = False
            if exclude_lone_endpoint and injections == 0 and endpoints == 1:
                ok = False
        if ok:
            seen.add(pick)
    return sorted(seen)
