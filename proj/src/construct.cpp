#include "rdcx/construct.hpp"

#include <algorithm>
#include <map>

#include "rdcx/morphism.hpp"

namespace rdcx {

// --- gray ------------------------------------------------------------------

ElemRef GrayResult::pair_of(ElemRef x, ElemRef y) const {
    const int d = x.dim + y.dim;
    for (int i = 0; i < (int)pairs[d].size(); ++i)
        if (pairs[d][i].first == x && pairs[d][i].second == y) return {d, i};
    fail("DanglingRef", "pair not present in the Gray product");
}

GrayResult gray(PosetPtr p, PosetPtr q) {
    GrayResult r;
    if (p->empty() || q->empty()) {
        r.poset = OgPoset::make({});
        return r;
    }
    const int nd = p->dim() + q->dim();
    r.pairs.resize(nd + 1);
    std::map<std::pair<std::pair<int, int>, std::pair<int, int>>, int> index;
    for (int d = 0; d <= nd; ++d)
        for (int dx = 0; dx <= std::min(d, p->dim()); ++dx) {
            int dy = d - dx;
            if (dy > q->dim()) continue;
            for (int ix = 0; ix < p->size(dx); ++ix)
                for (int iy = 0; iy < q->size(dy); ++iy) {
                    index[{{dx, ix}, {dy, iy}}] = (int)r.pairs[d].size();
                    r.pairs[d].push_back({{dx, ix}, {dy, iy}});
                }
        }
    std::vector<std::vector<Faces>> strata(nd + 1);
    for (int d = 0; d <= nd; ++d)
        for (auto& [x, y] : r.pairs[d]) {
            Faces f;
            for (Sign a : {Sign::minus, Sign::plus}) {
                auto& side = f.side(a);
                for (int j : p->faces(x).side(a))
                    side.push_back(index.at({{x.dim - 1, j}, {y.dim, y.idx}}));
                Sign b = (x.dim % 2 == 0) ? a : flip(a);
                for (int j : q->faces(y).side(b))
                    side.push_back(index.at({{x.dim, x.idx}, {y.dim - 1, j}}));
            }
            strata[d].push_back(std::move(f));
        }
    r.poset = OgPoset::make(std::move(strata));
    return r;
}

GradedFunction gray_map(const GradedFunction& f, const GradedFunction& g, bool dir_comap) {
    MorphismClass cf = classify_morphism(f), cg = classify_morphism(g);
    if (dir_comap) {
        if (!cf.comap || !cg.comap) fail("GrayOfCollapse", "gray of comaps requires comaps");
    } else {
        if (!cf.local_embedding || !cg.local_embedding)
            fail("GrayOfCollapse",
                 "gray of morphisms is defined for local embeddings and subdivisions, never collapses");
    }
    GrayResult src = gray(f.source, g.source);
    GrayResult dst = gray(f.target, g.target);
    GradedFunction h;
    h.source = src.poset;
    h.target = dst.poset;
    h.map.resize(src.poset->dim() + 1);
    for (int d = 0; d <= src.poset->dim(); ++d)
        for (auto& [x, y] : src.pairs[d]) h.map[d].push_back(dst.pair_of(f(x), g(y)));
    return h;
}

// --- join --------------------------------------------------------------------

namespace {

// freely add a positive least element: shift dimensions by one
PosetPtr augment(PosetPtr p) {
    std::vector<std::vector<Faces>> strata(p->dim() + 2);
    strata[0].push_back(Faces{});
    for (int d = 0; d <= p->dim(); ++d)
        for (int i = 0; i < p->size(d); ++i) {
            Faces f = p->faces({d, i});
            if (d == 0) f.out.push_back(0);  // bottom is a positive face of every old vertex
            strata[d + 1].push_back(std::move(f));
        }
    return OgPoset::make(std::move(strata));
}

}  // namespace

JoinResult join(PosetPtr p, PosetPtr q) {
    JoinResult r;
    if (p->empty()) {
        r.poset = q;
        r.origins.resize(q->dim() + 1);
        for (int d = 0; d <= q->dim(); ++d)
            for (int i = 0; i < q->size(d); ++i)
                r.origins[d].push_back({1, {-1, -1}, {d, i}});
        return r;
    }
    if (q->empty()) {
        r.poset = p;
        r.origins.resize(p->dim() + 1);
        for (int d = 0; d <= p->dim(); ++d)
            for (int i = 0; i < p->size(d); ++i)
                r.origins[d].push_back({0, {d, i}, {-1, -1}});
        return r;
    }
    PosetPtr ap = augment(p), aq = augment(q);
    GrayResult g = gray(ap, aq);
    // de-augment: drop the least element (bottom, bottom); dims shift down
    const int nd = g.poset->dim();
    std::vector<std::vector<int>> newidx(nd + 1);
    std::vector<std::vector<Faces>> strata(nd);
    r.origins.resize(nd);
    for (int d = 0; d <= nd; ++d) {
        newidx[d].assign(g.poset->size(d), -1);
        for (int i = 0; i < g.poset->size(d); ++i) {
            auto [x, y] = g.pairs[d][i];
            if (x.dim == 0 && x.idx == 0 && y.dim == 0 && y.idx == 0) continue;  // (bot, bot)
            newidx[d][i] = (int)strata[d - 1].size();
            Faces nf;
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : g.poset->faces({d, i}).side(a)) {
                    int m = newidx[d - 1][j];
                    if (m >= 0) nf.side(a).push_back(m);
                }
            strata[d - 1].push_back(std::move(nf));
            JoinResult::Origin o;
            bool xb = x.dim == 0 && x.idx == 0;
            bool yb = y.dim == 0 && y.idx == 0;
            if (yb)
                o = {0, {x.dim - 1, x.idx - (x.dim == 1 ? 0 : 0)}, {-1, -1}};
            else if (xb)
                o = {1, {-1, -1}, {y.dim - 1, y.idx}};
            else
                o = {2, {x.dim - 1, x.idx}, {y.dim - 1, y.idx}};
            // augmented strata: stratum d of augm(p) is stratum d-1 of p (d >= 1)
            r.origins[d - 1].push_back(o);
        }
    }
    r.poset = OgPoset::make(std::move(strata));
    return r;
}

// --- partial cylinder ----------------------------------------------------------

ElemRef CylinderResult::of(int i, ElemRef x) const {
    const int d = i == 1 ? x.dim + 1 : x.dim;
    for (int n = 0; n < (int)labels[d].size(); ++n)
        if (labels[d][n].i == i && labels[d][n].x == x) return {d, n};
    fail("DanglingRef", "element not present in the cylinder");
}

CylinderResult partial_cylinder(const CylinderSpec& spec) {
    PosetPtr P = spec.base;
    const Subset& K = spec.k;
    if (K.owner() != P) fail("DanglingRef", "cylinder subset belongs to a different poset");
    if (!K.is_closed()) fail("KNotClosed", "the collapsed region must be a closed subset");
    CylinderResult r;
    const int nd = P->dim() + 1;
    r.labels.resize(nd + 1);
    std::map<std::pair<int, std::pair<int, int>>, ElemRef> index;
    auto add_label = [&](int i, ElemRef x) {
        int d = i == 1 ? x.dim + 1 : x.dim;
        index[{i, {x.dim, x.idx}}] = {d, (int)r.labels[d].size()};
        r.labels[d].push_back({i, x});
    };
    for (int d = 0; d <= P->dim(); ++d)
        for (int i = 0; i < P->size(d); ++i) {
            ElemRef x{d, i};
            if (K.contains(x))
                add_label(-1, x);
            else {
                add_label(0, x);
                add_label(2, x);
            }
        }
    for (int d = 0; d <= P->dim(); ++d)
        for (int i = 0; i < P->size(d); ++i)
            if (!K.contains({d, i})) add_label(1, {d, i});

    std::vector<std::vector<Faces>> strata(nd + 1);
    for (int d = 0; d <= nd; ++d) strata[d].resize(r.labels[d].size());
    for (int d = 0; d <= nd; ++d)
        for (int n = 0; n < (int)r.labels[d].size(); ++n) {
            auto [i, x] = r.labels[d][n];
            Faces& f = strata[d][n];
            if (i == -1) {
                for (Sign a : {Sign::minus, Sign::plus})
                    for (int j : P->faces(x).side(a))
                        f.side(a).push_back(index.at({-1, {x.dim - 1, j}}).idx);
            } else if (i == 1) {
                f.in.push_back(index.at({0, {x.dim, x.idx}}).idx);
                f.out.push_back(index.at({2, {x.dim, x.idx}}).idx);
                for (Sign a : {Sign::minus, Sign::plus}) {
                    // (1, y) for y in faces^{-a} x outside K
                    for (int j : P->faces(x).side(flip(a))) {
                        ElemRef y{x.dim - 1, j};
                        if (!K.contains(y)) f.side(a).push_back(index.at({1, {y.dim, y.idx}}).idx);
                    }
                }
            } else {
                for (Sign a : {Sign::minus, Sign::plus})
                    for (int j : P->faces(x).side(a)) {
                        ElemRef y{x.dim - 1, j};
                        if (K.contains(y))
                            f.side(a).push_back(index.at({-1, {y.dim, y.idx}}).idx);
                        else
                            f.side(a).push_back(index.at({i, {y.dim, y.idx}}).idx);
                    }
            }
        }
    for (auto& st : strata)
        for (auto& f : st) {
            std::sort(f.in.begin(), f.in.end());
            std::sort(f.out.begin(), f.out.end());
        }
    while (!strata.empty() && strata.back().empty()) strata.pop_back();
    r.poset = OgPoset::make(std::move(strata));
    r.tau.source = r.poset;
    r.tau.target = P;
    r.tau.map.resize(r.poset->dim() + 1);
    for (int d = 0; d <= r.poset->dim(); ++d)
        for (auto& lab : r.labels[d]) r.tau.map[d].push_back(lab.x);
    return r;
}

CylinderResult generating_collapse(PosetPtr atom_base, const Subset& k) {
    if (!atom_base->greatest()) fail("KNotInBoundary", "generating collapses live over atoms");
    if (!k.is_closed()) fail("KNotClosed", "the collapsed region must be a closed subset");
    Subset bd = whole_boundary(Subset::whole(atom_base));
    if (!k.subset_of(bd))
        fail("KNotInBoundary", "the collapsed region must lie in the boundary of the atom");
    return partial_cylinder({atom_base, k});
}

// --- pushouts ---------------------------------------------------------------------

PushoutResult pushout_embedding(const GradedFunction& iota, const GradedFunction& iota2) {
    if (iota.source != iota2.source && iota.source->key() != iota2.source->key())
        fail("DomainMismatch", "pushout legs must share their source");
    if (!is_embedding(iota) || !is_embedding(iota2))
        fail("NotEmbedding", "pushout_embedding requires two embeddings");
    PosetPtr P = iota.target, Q = iota2.target, U = iota.source;
    // carrier: all of P, then Q minus the image of U
    std::vector<std::vector<ElemRef>> q_to_p(Q->dim() + 1);
    for (int d = 0; d <= Q->dim(); ++d) q_to_p[d].assign(Q->size(d), ElemRef{-1, -1});
    for (int d = 0; d <= U->dim(); ++d)
        for (int i = 0; i < U->size(d); ++i) {
            ElemRef in_q = iota2.map[d][i];
            q_to_p[in_q.dim][in_q.idx] = iota.map[d][i];
        }
    const int nd = std::max(P->dim(), Q->dim());
    std::vector<std::vector<Faces>> strata(nd + 1);
    std::vector<std::vector<ElemRef>> p_map(P->dim() + 1), q_map(Q->dim() + 1);
    for (int d = 0; d <= P->dim(); ++d)
        for (int i = 0; i < P->size(d); ++i) {
            p_map[d].push_back({d, (int)strata[d].size()});
            strata[d].push_back(P->faces({d, i}));
        }
    for (int d = 0; d <= Q->dim(); ++d) {
        q_map[d].resize(Q->size(d));
        for (int i = 0; i < Q->size(d); ++i)
            q_map[d][i] = q_to_p[d][i].dim >= 0 ? p_map[d][q_to_p[d][i].idx] : ElemRef{d, -1};
    }
    for (int d = 0; d <= Q->dim(); ++d)
        for (int i = 0; i < Q->size(d); ++i) {
            if (q_map[d][i].idx >= 0) continue;
            Faces nf;
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : Q->faces({d, i}).side(a)) nf.side(a).push_back(q_map[d - 1][j].idx);
            q_map[d][i] = {d, (int)strata[d].size()};
            strata[d].push_back(std::move(nf));
        }
    PushoutResult r;
    r.poset = OgPoset::make(std::move(strata));
    r.left.source = P;
    r.left.target = r.poset;
    r.left.map = std::move(p_map);
    r.right.source = Q;
    r.right.target = r.poset;
    r.right.map = std::move(q_map);
    return r;
}

ComergerPushout substitute_along_subdivision(const GradedFunction& iota,
                                             const GradedFunction& s_bar) {
    // iota: U -> P embedding; s_bar: V -> U comap (the subdivision s: U ~> V)
    if (!is_embedding(iota)) fail("NotEmbedding", "substitution requires an embedding of the pattern");
    if (iota.source != s_bar.target && iota.source->key() != s_bar.target->key())
        fail("DomainMismatch", "the subdivision must subdivide the embedded pattern");
    {
        MorphismClass cs = classify_morphism(s_bar);
        if (!cs.comap) fail("ClassificationFailure", "s is not a subdivision (its dual is not a comap)");
    }
    PosetPtr P = iota.target, U = iota.source, V = s_bar.source;
    Subset img = image_subset(iota);
    // target elements: (P minus iota(U)), then V; faces derived from the
    // coface formula of substitution along a subdivision.
    const int nd = std::max(P->dim(), V->dim());
    std::vector<std::vector<int>> pidx(P->dim() + 1), vidx(V->dim() + 1);
    std::vector<int> count(nd + 1, 0);
    for (int d = 0; d <= P->dim(); ++d) {
        pidx[d].assign(P->size(d), -1);
        for (int i = 0; i < P->size(d); ++i)
            if (!img.contains({d, i})) pidx[d][i] = count[d]++;
    }
    for (int d = 0; d <= V->dim(); ++d) {
        vidx[d].resize(V->size(d));
        for (int i = 0; i < V->size(d); ++i) vidx[d][i] = count[d]++;
    }
    // map U-elements to their "replacement" top-dimensional V cells:
    // repl[u] = { v in V : s_bar(v) = u, dim v = dim u }
    std::vector<std::vector<std::vector<int>>> repl(U->dim() + 1);
    for (int d = 0; d <= U->dim(); ++d) repl[d].assign(U->size(d), {});
    for (int d = 0; d <= V->dim(); ++d)
        for (int i = 0; i < V->size(d); ++i) {
            ElemRef u = s_bar.map[d][i];
            if (u.dim == d) repl[u.dim][u.idx].push_back(i);
        }
    // inverse of iota on its image
    std::vector<std::vector<int>> inv(P->dim() + 1);
    for (int d = 0; d <= P->dim(); ++d) inv[d].assign(P->size(d), -1);
    for (int d = 0; d <= U->dim(); ++d)
        for (int i = 0; i < U->size(d); ++i) {
            ElemRef t = iota.map[d][i];
            inv[t.dim][t.idx] = i;
        }
    std::vector<std::vector<Faces>> strata(nd + 1);
    for (int d = 0; d <= nd; ++d) strata[d].resize(count[d]);
    // faces of surviving P-elements
    for (int d = 0; d <= P->dim(); ++d)
        for (int i = 0; i < P->size(d); ++i) {
            if (pidx[d][i] < 0) continue;
            Faces& nf = strata[d][pidx[d][i]];
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : P->faces({d, i}).side(a)) {
                    if (!img.contains({d - 1, j})) {
                        nf.side(a).push_back(pidx[d - 1][j]);
                    } else {
                        int uu = inv[d - 1][j];
                        for (int v : repl[d - 1][uu]) nf.side(a).push_back(vidx[d - 1][v]);
                    }
                }
        }
    // faces of V-elements: V's own faces
    for (int d = 0; d <= V->dim(); ++d)
        for (int i = 0; i < V->size(d); ++i) {
            Faces& nf = strata[d][vidx[d][i]];
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : V->faces({d, i}).side(a)) nf.side(a).push_back(vidx[d - 1][j]);
        }
    for (auto& st : strata)
        for (auto& f : st) {
            std::sort(f.in.begin(), f.in.end());
            std::sort(f.out.begin(), f.out.end());
        }
    while (!strata.empty() && strata.back().empty()) strata.pop_back();
    ComergerPushout r;
    r.poset = OgPoset::make(std::move(strata));
    r.t_bar.source = r.poset;
    r.t_bar.target = P;
    r.t_bar.map.resize(r.poset->dim() + 1);
    // rebuild by position: P-part first, then V-part
    std::vector<std::vector<ElemRef>> tb(r.poset->dim() + 1);
    for (int d = 0; d <= r.poset->dim(); ++d) tb[d].resize(count[d]);
    for (int d = 0; d <= P->dim(); ++d)
        for (int i = 0; i < P->size(d); ++i)
            if (pidx[d][i] >= 0) tb[d][pidx[d][i]] = {d, i};
    for (int d = 0; d <= V->dim(); ++d)
        for (int i = 0; i < V->size(d); ++i) {
            ElemRef u = s_bar.map[d][i];
            tb[d][vidx[d][i]] = iota.map[u.dim][u.idx];
        }
    r.t_bar.map = std::move(tb);
    r.incl_v.source = V;
    r.incl_v.target = r.poset;
    r.incl_v.map.resize(V->dim() + 1);
    for (int d = 0; d <= V->dim(); ++d)
        for (int i = 0; i < V->size(d); ++i) r.incl_v.map[d].push_back({d, vidx[d][i]});
    return r;
}

ComergerPushout pushout_comerger(const GradedFunction& iota, const GradedFunction& s_bar) {
    if (!iota.source->greatest())
        fail("NotAtomSource", "pushout_comerger requires the embedded pattern to be an atom");
    return substitute_along_subdivision(iota, s_bar);
}

}  // namespace rdcx
