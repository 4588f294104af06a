"""Synthetic citation-style datasets for tests and benchmarks.

Generates graphs with the statistics that make active selection on citation
networks interesting: heavy-tailed degrees (a few hubs, many leaves), strong
but imperfect class homophily, and sparse binary bag-of-words features where
each class leans on its own block of the vocabulary.
"""

import numpy as np

from .graph import FeatureMatrix, SparseGraph, save_bundle


def make_synthetic(n=2708, k=7, d=1433, seed=0, mean_degree=4.0, homophily=0.8,
                   tail=2.8, words_per_node=18, topic_frac=0.7, class_skew=1.0,
                   community_size=0, subtopic_frac=0.5, junk_frac=0.0,
                   mix_frac=0.0, words_sigma=0.0, alias_frac=0.0):
    """Build (graph, features, labels, k).

    Degrees follow a capped Pareto weight sequence (exponent `tail`); a
    `homophily` fraction of edges joins same-class endpoint pairs.  Each node
    activates `words_per_node` vocabulary slots, a `topic_frac` share of them
    drawn from its class's block of the vocabulary, the rest anywhere.
    Class sizes decay geometrically with ratio `class_skew` (1.0 = balanced).

    With community_size > 0, each class splits into communities of that mean
    size and same-class edges stay inside one community, the way a topic in a
    citation network is many separate clusters rather than one block.
    Community sizes follow a harmonic profile, so a class's largest cluster
    holds its largest hubs and a global ranking by centrality keeps returning
    to the same few clusters.  A `subtopic_frac` share of each node's topical
    words comes from its community's own slice of the class vocabulary, the
    rest from the class-wide block: sub-slice words only pay off once somebody
    inside that cluster is labeled, class-wide words generalize across the
    whole class.  Cross-class edges run between partnered clusters (a few
    fixed partners per cluster), so class boundaries are localized contact
    zones rather than a uniform background.  A `junk_frac` share of nodes
    draws all its words uniformly, papers whose vocabulary says nothing about
    their topic; only their graph position can classify them.

    A `mix_frac` share of nodes is interdisciplinary: their topical words are
    split between their own class and the class of their cluster's cross-edge
    partner, with no sub-topic slice.  Those nodes stay genuinely ambiguous to
    a feature classifier no matter how much of the graph is labeled, and
    training on one pushes the partner class's vocabulary the wrong way, so a
    selector that chases predictive uncertainty keeps paying for labels that
    teach it the least.

    With words_sigma > 0, per-node word counts follow a lognormal around
    `words_per_node` instead of a constant, the way abstracts range from a few
    index terms to a full page.  Short documents stay hard to place from
    features alone no matter how many labels arrive.

    An `alias_frac` share of the mid-tier communities (never a class's
    flagship) borrows its whole topical vocabulary from the class its cross
    edges point at, the way an applications subfield writes in the language
    of the field it borrows its methods from, while citing across that
    boundary only sparsely.  A classifier that has never seen a label inside
    such a cluster places it in the partner class with full confidence, so
    predictive uncertainty never flags it, and the thin cross linkage keeps
    propagated labels unsure about it rather than wrongly settled; one label
    inside flips the whole cluster.  Spotting those regions takes the graph,
    not the feature posterior.
    """
    if not 0.0 <= homophily <= 1.0:
        raise ValueError("homophily must lie in [0, 1]")
    if d < k:
        raise ValueError("need at least one vocabulary slot per class")
    if not 0.0 < class_skew <= 1.0:
        raise ValueError("class_skew must lie in (0, 1]")
    if not 0.0 <= subtopic_frac <= 1.0:
        raise ValueError("subtopic_frac must lie in [0, 1]")
    if not 0.0 <= junk_frac < 1.0:
        raise ValueError("junk_frac must lie in [0, 1)")
    if not 0.0 <= mix_frac < 1.0:
        raise ValueError("mix_frac must lie in [0, 1)")
    if words_sigma < 0.0:
        raise ValueError("words_sigma must be non-negative")
    if not 0.0 <= alias_frac <= 1.0:
        raise ValueError("alias_frac must lie in [0, 1]")
    rng = np.random.default_rng(seed)

    class_p = class_skew ** np.arange(k)
    labels = rng.choice(k, size=n, p=class_p / class_p.sum()).astype(np.int64)
    for c in range(k):  # tiny n can miss a class entirely
        if not (labels == c).any():
            labels[rng.integers(n)] = c

    u = rng.random(n)
    w = np.minimum((1.0 - u) ** (-1.0 / (tail - 1.0)), np.sqrt(n))

    e_total = int(round(n * mean_degree / 2.0))
    e_in = int(round(homophily * e_total))
    e_out = e_total - e_in

    blocks = []  # node-id arrays that same-class edges are confined to
    comm_of = np.zeros(n, dtype=np.int64)
    block_of = np.zeros(n, dtype=np.int64)
    block_comm = []
    m_per_class = np.ones(k, dtype=np.int64)
    for c in range(k):
        members = np.flatnonzero(labels == c)
        base = len(blocks)
        if community_size > 0:
            m = max(1, int(round(len(members) / community_size)))
            p_comm = 1.0 / (1.0 + np.arange(m))
            counts = rng.multinomial(len(members), p_comm / p_comm.sum())
            order = members[np.argsort(-w[members])]
            # a field's most-cited papers anchor its main line and its
            # second cluster; the next tier of citations anchors two
            # offshoot heads each, so every cluster owns real hubs but only
            # the leading clusters own the giants
            lead = [0] * min(3, int(counts[0]))
            if m > 1:
                lead += [1] * min(2, int(counts[1]))
            lead += [j for j in range(2, m) if counts[j] > 0]
            lead += [j for j in range(2, m) if counts[j] > 1]
            lead = np.array(lead[:len(members)], dtype=np.int64)
            fill = counts - np.bincount(lead, minlength=m)
            rest = order[len(lead):]
            jitter = rng.lognormal(0.0, 0.35, size=len(rest))
            rest = rest[np.argsort(-w[rest] * jitter)]
            ranked = np.concatenate([order[:len(lead)], rest])
            assignment = np.concatenate([lead, np.repeat(np.arange(m), fill)])
            m_per_class[c] = m
            comm_of[ranked] = assignment
            block_of[ranked] = base + assignment
            blocks.extend(ranked[assignment == j] for j in range(m))
            block_comm.extend(range(m))
        else:
            block_of[members] = base
            blocks.append(members)
            block_comm.append(0)
    block_comm = np.array(block_comm, dtype=np.int64)
    block_mass = np.array([w[b].sum() for b in blocks])
    # internal edges go by member count, not citation mass: an offshoot
    # cluster is as internally knit as a flagship, it just lacks the giants
    block_size = np.array([len(b) for b in blocks], dtype=np.float64)
    edge_block = rng.choice(len(blocks), size=e_in,
                            p=block_size / block_size.sum())
    pieces = []
    for j, members in enumerate(blocks):
        cnt = int((edge_block == j).sum())
        if cnt == 0 or len(members) < 2:
            continue
        pb = w[members] / w[members].sum()
        src = rng.choice(members, size=cnt, p=pb)
        dst = rng.choice(members, size=cnt, p=pb)
        pieces.append(np.stack([src, dst], axis=1))
    block_class = np.concatenate([np.full(m_per_class[c], c) for c in range(k)])
    partner_class = np.full(len(blocks), -1, dtype=np.int64)
    pairs = []
    for b in range(len(blocks)):
        foreign = np.flatnonzero(block_class != block_class[b])
        if len(foreign) == 0 or len(blocks[b]) == 0:
            continue
        take = min(3, len(foreign))
        chosen = rng.choice(foreign, size=take, replace=False)
        partner_class[b] = block_class[chosen[0]]
        for q in chosen:
            pairs.append((b, q))
    block = d // k
    alias_off = np.full(len(blocks), -1, dtype=np.int64)
    if alias_frac > 0.0:
        for b in range(len(blocks)):
            # a class's flagship cluster keeps its canonical vocabulary;
            # borrowing concentrates in the mid-tier ones
            if block_comm[b] < 1 or partner_class[b] < 0:
                continue
            if block_comm[b] == 1:
                p = 0.5 * alias_frac
            elif block_comm[b] <= 3:
                p = alias_frac
            else:
                # the deep tail of tiny offshoots stays honest: a borrowed
                # vocabulary only misleads at a size worth discovering
                continue
            if rng.random() < p:
                alias_off[b] = rng.integers(block)
    # a third of the cross edges is stray background citation: no region hears
    # from one field only, so propagated scores stay honestly mixed in regions
    # no label has reached instead of echoing a single foreign seed
    e_diff = int(round(0.35 * e_out))
    if e_diff > 0:
        pn = w / w.sum()
        cand = rng.choice(n, size=(2 * e_diff + 8, 2), p=pn)
        diff = cand[labels[cand[:, 0]] != labels[cand[:, 1]]][:e_diff]
        if len(diff):
            pieces.append(diff)
    e_pair = e_out - e_diff
    if pairs and e_pair > 0:
        pairs = np.array(pairs)
        pw = block_mass[pairs[:, 0]] * block_mass[pairs[:, 1]]
        # borrowing clusters cite across the boundary sparsely: the borrowed
        # vocabulary is what misleads, and the thin linkage keeps spreading
        # estimates genuinely unsure about them instead of wrongly settled
        pw = pw * np.where(alias_off[pairs[:, 0]] >= 0, 0.3, 1.0)
        pw = pw * np.where(alias_off[pairs[:, 1]] >= 0, 0.3, 1.0)
        if pw.sum() > 0:
            which = rng.choice(len(pairs), size=e_pair, p=pw / pw.sum())
            for idx in range(len(pairs)):
                cnt = int((which == idx).sum())
                p_mem, q_mem = blocks[pairs[idx, 0]], blocks[pairs[idx, 1]]
                if cnt == 0 or len(p_mem) == 0 or len(q_mem) == 0:
                    continue
                # boundary crossings concentrate on each cluster's least-cited
                # quartile: contact zones are small patches at the periphery,
                # hubs stay clean ambassadors, and the zone rows are deeply
                # mixed instead of the whole cluster being shallowly frayed
                pz = p_mem[np.argsort(w[p_mem])[:max(2, len(p_mem) // 4)]]
                qz = q_mem[np.argsort(w[q_mem])[:max(2, len(q_mem) // 4)]]
                src = rng.choice(pz, size=cnt)
                dst = rng.choice(qz, size=cnt)
                pieces.append(np.stack([src, dst], axis=1))
    if not pieces:
        pieces.append(np.empty((0, 2), dtype=np.int64))
    edges = np.concatenate(pieces, axis=0)
    graph = SparseGraph.from_edges(n, edges)  # dedupes; drops the loop draws

    if words_sigma > 0.0:
        mu = np.log(words_per_node) - 0.5 * words_sigma ** 2
        doc_len = np.rint(rng.lognormal(mu, words_sigma, size=n)).astype(np.int64)
        doc_len = np.clip(doc_len, 3, max(3, d // 4))
    else:
        doc_len = np.full(n, words_per_node, dtype=np.int64)
    x = np.zeros((n, d))
    junk = rng.random(n) < junk_frac
    mixed = (rng.random(n) < mix_frac) & ~junk
    for i in range(n):
        wpn = int(doc_len[i])
        n_topic = int(round(topic_frac * wpn))
        if junk[i]:
            x[i, rng.choice(d, size=wpn, replace=False)] = 1.0
            continue
        c = labels[i]
        b = int(block_of[i])
        borrowed = alias_off[b] >= 0
        # a borrowed cluster writes entirely in its partner field's vocabulary;
        # only its citations say where it belongs
        lo = (int(partner_class[b]) if borrowed else c) * block
        if mixed[i] and partner_class[b] >= 0:
            f_lo = int(partner_class[b]) * block
            n_f = min(n_topic // 2, block)
            foreign_w = rng.choice(np.arange(f_lo, f_lo + block), size=n_f,
                                   replace=False)
            own = rng.choice(np.arange(lo, lo + block),
                             size=min(n_topic - n_f, block), replace=False)
            stray = rng.choice(d, size=wpn - n_f - len(own), replace=False)
            x[i, foreign_w] = 1.0
            x[i, own] = 1.0
            x[i, stray] = 1.0
            continue
        m = int(m_per_class[c])
        # community slice words make clusters of one class sub-topics, not clones
        n_sub = min(int(round(subtopic_frac * n_topic)), block) if m > 1 else 0
        if n_sub:
            width = max(1, block // m)
            if borrowed:
                s_lo = lo + min(int(alias_off[b]), block - width)
            else:
                s_lo = lo + int(comm_of[i]) * width
            sub = np.arange(s_lo, min(s_lo + width, lo + block))
            n_sub = min(n_sub, len(sub))
            x[i, rng.choice(sub, size=n_sub, replace=False)] = 1.0
        topical = rng.choice(np.arange(lo, lo + block),
                             size=min(n_topic, block) - n_sub, replace=False)
        stray = rng.choice(d, size=wpn - n_sub - len(topical), replace=False)
        x[i, topical] = 1.0
        x[i, stray] = 1.0
    return graph, FeatureMatrix(x), labels, k


def write_synthetic_bundle(path, name="synthetic", **params):
    """Generate and persist a bundle; generator parameters land in meta.json."""
    graph, feats, labels, k = make_synthetic(**params)
    meta = {"generator": dict(params)}
    save_bundle(path, graph, feats, labels, k, name=name, extra_meta=meta)
    return graph, feats, labels, k


def measured_homophily(graph, labels):
    """Fraction of edges joining same-class endpoints."""
    src = np.repeat(np.arange(graph.n), np.diff(graph.row_ptr))
    same = labels[src] == labels[graph.col_idx]
    return float(same.mean()) if len(src) else 0.0
