"""Independent brute-force references used by several test modules."""

from fractions import Fraction
from itertools import combinations, product


def enumerate_flows(topology):
    """Every (weight, links, up_links) of a uniform flow under ECMP.

    Source host uniform, destination ToR uniform over the other ToRs, host
    under it uniform, and each ECMP stage uniform. ``up_links`` are the links
    crossed before the turning switch.
    """
    p = topology.params
    hosts = range(p.n_hosts)
    out = []
    for s, d_tor in product(range(p.n_tor), range(p.n_tor)):
        if s == d_tor:
            continue
        s_pod, d_pod = divmod(s, p.n0)[0], divmod(d_tor, p.n0)[0]
        for hs, hd in product(range(p.H), range(p.H)):
            w_hosts = Fraction(1, p.n_hosts) * Fraction(1, p.n_tor - 1) * Fraction(1, p.H)
            src_link = [topology.host_link_id(s, hs)] if p.include_host_links else []
            dst_link = [topology.host_link_id(d_tor, hd)] if p.include_host_links else []
            si, di = s % p.n0, d_tor % p.n0
            if s_pod == d_pod:
                for j in range(p.n1):
                    up = src_link + [topology.level1_id(s_pod, si, j)]
                    down = [topology.level1_id(d_pod, di, j)] + dst_link
                    out.append((w_hosts / p.n1, tuple(up + down), tuple(up)))
            else:
                for j, l, m in product(range(p.n1), range(p.n2), range(p.n1)):
                    up = src_link + [topology.level1_id(s_pod, si, j), topology.level2_id(s_pod, j, l)]
                    down = [topology.level2_id(d_pod, m, l), topology.level1_id(d_pod, di, m)] + dst_link
                    out.append((w_hosts / (p.n1 * p.n2 * p.n1), tuple(up + down), tuple(up)))
    del hosts
    return out


def cooccurrence_oracle(flows, a, b):
    num = sum(w for w, links, _ in flows if a in links and b in links)
    den = sum(w for w, links, _ in flows if a in links)
    return num / den


def min_cover_size(rows, n_links):
    """Smallest link set hitting every row, by power-set enumeration."""
    if not rows:
        return 0
    for size in range(0, n_links + 1):
        for combo in combinations(range(n_links), size):
            chosen = set(combo)
            if all(chosen & set(r) for r in rows):
                return size
    return None
