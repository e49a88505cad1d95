#include "rdcx/molecule.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rdcx {

// --- basic constructions --------------------------------------------------

CertPtr point() {
    auto c = std::make_shared<MoleculeCert>();
    c->kind = MoleculeCert::Kind::point;
    c->carrier = OgPoset::make({{Faces{}}});
    return c;
}

CertPtr globe(int n) {
    if (n < 0) fail("DimMismatch", "globe dimension must be >= 0");
    CertPtr g = point();
    for (int d = 1; d <= n; ++d) g = atom(g, g);
    return g;
}

CertPtr arrow() { return globe(1); }

static GradedFunction make_emb(PosetPtr src, PosetPtr dst,
                               const std::vector<std::vector<ElemRef>>& map) {
    GradedFunction f;
    f.source = std::move(src);
    f.target = std::move(dst);
    f.map = map;
    return f;
}

static CertPtr rebase_cert(const CertPtr& c, const GradedFunction& iso) {
    auto n = std::make_shared<MoleculeCert>(*c);
    n->carrier = iso.target;
    if (c->kind != MoleculeCert::Kind::point) {
        n->emb_left = compose(iso, c->emb_left);
        n->emb_right = compose(iso, c->emb_right);
    }
    return n;
}

CertPtr paste(const CertPtr& u, const CertPtr& v, int k) {
    PosetPtr U = u->carrier, V = v->carrier;
    if (k == -1) k = std::max(0, std::min(U->dim(), V->dim()) - 1);
    if (k < 0) fail("NoBoundaryIso", "pasting dimension must be >= 0");
    Extracted bu = extract(boundary(Subset::whole(U), k, SignArg::plus));
    Extracted bv = extract(boundary(Subset::whole(V), k, SignArg::minus));
    auto phi = find_isomorphism(bu.poset, bv.poset);
    if (!phi) fail("NoBoundaryIso", "bd_" + std::to_string(k) + "^+ of the left part is not isomorphic to bd^- of the right part");

    // glue map: element of V -> (already-in-U ? U elem : fresh)
    // V elements in the image of bv get identified along phi^-1 with bu.
    std::vector<std::vector<ElemRef>> v_to_u(V->dim() + 1);
    for (int d = 0; d <= V->dim(); ++d) v_to_u[d].assign(V->size(d), ElemRef{-1, -1});
    for (int d = 0; d <= bu.poset->dim(); ++d)
        for (int i = 0; i < bu.poset->size(d); ++i) {
            ElemRef in_v = bv.emb.map[d][(*phi).map[d][i].idx];
            v_to_u[in_v.dim][in_v.idx] = bu.emb.map[d][i];
        }

    std::vector<std::vector<Faces>> strata(std::max(U->dim(), V->dim()) + 1);
    std::vector<std::vector<ElemRef>> u_map(U->dim() + 1), v_map(V->dim() + 1);
    for (int d = 0; d <= U->dim(); ++d) {
        for (int i = 0; i < U->size(d); ++i) {
            u_map[d].push_back({d, (int)strata[d].size()});
            strata[d].push_back(U->faces({d, i}));
        }
    }
    for (int d = 0; d <= V->dim(); ++d) {
        v_map[d].resize(V->size(d));
        for (int i = 0; i < V->size(d); ++i) {
            if (v_to_u[d][i].dim >= 0) {
                v_map[d][i] = u_map[d][v_to_u[d][i].idx];
            } else {
                v_map[d][i] = {d, -1};  // fresh, index assigned below
            }
        }
    }
    for (int d = 0; d <= V->dim(); ++d)
        for (int i = 0; i < V->size(d); ++i) {
            if (v_map[d][i].idx >= 0) continue;
            Faces nf;
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : V->faces({d, i}).side(a)) {
                    ElemRef m = v_map[d - 1][j];
                    nf.side(a).push_back(m.idx);
                }
            v_map[d][i] = {d, (int)strata[d].size()};
            strata[d].push_back(std::move(nf));
        }
    PosetPtr carrier = OgPoset::make(std::move(strata));
    auto c = std::make_shared<MoleculeCert>();
    c->kind = MoleculeCert::Kind::paste;
    c->k = k;
    c->carrier = carrier;
    c->left = u;
    c->right = v;
    c->emb_left = make_emb(U, carrier, u_map);
    c->emb_right = make_emb(V, carrier, v_map);
    return c;
}

CertPtr paste_at(const CertPtr& u, const CertPtr& v, int k, const GradedFunction& iota,
                 bool over) {
    PosetPtr U = u->carrier, V = v->carrier;
    // iota embeds the glued boundary of V into U's carrier.
    Extracted bv = extract(boundary(Subset::whole(V), k, over ? SignArg::minus : SignArg::plus));
    if (iota.source->key() != bv.poset->key() && !find_isomorphism(iota.source, bv.poset))
        fail("NotSubmolecule", "iota's domain is not the glued boundary of the attached part");
    if (iota.target != U) fail("NotSubmolecule", "iota must land in the base carrier");
    if (!is_embedding(iota)) fail("NotSubmolecule", "iota is not an embedding");
    Subset host = boundary(Subset::whole(U), k, over ? SignArg::plus : SignArg::minus);
    Subset img = image_subset(iota);
    if (!img.subset_of(host))
        fail("NotSubmolecule", "iota does not land in the matching k-boundary of the base");
    Extracted host_ex = extract(host);
    GradedFunction into_host = corestrict(iota, host_ex);
    if (!is_submolecule(into_host)) fail("NotSubmolecule", "iota is not a submolecule inclusion");

    // identify iota.source with bv (unique iso) so that iota reads on bv.poset
    GradedFunction glue = iota;
    if (iota.source->key() != bv.poset->key()) {
        auto psi = find_isomorphism(bv.poset, iota.source);
        glue = compose(iota, *psi);
    } else {
        glue.source = bv.poset;
    }

    std::vector<std::vector<ElemRef>> v_to_u(V->dim() + 1);
    for (int d = 0; d <= V->dim(); ++d) v_to_u[d].assign(V->size(d), ElemRef{-1, -1});
    for (int d = 0; d <= bv.poset->dim(); ++d)
        for (int i = 0; i < bv.poset->size(d); ++i) {
            ElemRef in_v = bv.emb.map[d][i];
            v_to_u[in_v.dim][in_v.idx] = glue.map[d][i];
        }

    std::vector<std::vector<Faces>> strata(std::max(U->dim(), V->dim()) + 1);
    std::vector<std::vector<ElemRef>> u_map(U->dim() + 1), v_map(V->dim() + 1);
    for (int d = 0; d <= U->dim(); ++d)
        for (int i = 0; i < U->size(d); ++i) {
            u_map[d].push_back({d, (int)strata[d].size()});
            strata[d].push_back(U->faces({d, i}));
        }
    for (int d = 0; d <= V->dim(); ++d) {
        v_map[d].resize(V->size(d));
        for (int i = 0; i < V->size(d); ++i)
            v_map[d][i] = v_to_u[d][i].dim >= 0 ? u_map[d][v_to_u[d][i].idx] : ElemRef{d, -1};
    }
    for (int d = 0; d <= V->dim(); ++d)
        for (int i = 0; i < V->size(d); ++i) {
            if (v_map[d][i].idx >= 0) continue;
            Faces nf;
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : V->faces({d, i}).side(a)) nf.side(a).push_back(v_map[d - 1][j].idx);
            v_map[d][i] = {d, (int)strata[d].size()};
            strata[d].push_back(std::move(nf));
        }
    PosetPtr carrier = OgPoset::make(std::move(strata));
    auto c = std::make_shared<MoleculeCert>();
    c->kind = MoleculeCert::Kind::paste;
    c->k = k;
    c->carrier = carrier;
    c->left = over ? u : v;
    c->right = over ? v : u;
    c->emb_left = over ? make_emb(U, carrier, u_map) : make_emb(V, carrier, v_map);
    c->emb_right = over ? make_emb(V, carrier, v_map) : make_emb(U, carrier, u_map);
    return c;
}

CertPtr atom(const CertPtr& u, const CertPtr& v) {
    PosetPtr U = u->carrier, V = v->carrier;
    const int n = U->dim();
    if (V->dim() != n) fail("DimMismatch", "atom requires equal-dimensional round molecules");
    if (!is_round(U) || !is_round(V)) fail("NotRound", "atom requires round molecules");

    Extracted bum = extract(boundary(Subset::whole(U), n - 1, SignArg::minus));
    Extracted bup = extract(boundary(Subset::whole(U), n - 1, SignArg::plus));
    Extracted bvm = extract(boundary(Subset::whole(V), n - 1, SignArg::minus));
    Extracted bvp = extract(boundary(Subset::whole(V), n - 1, SignArg::plus));
    auto phim = find_isomorphism(bum.poset, bvm.poset);
    auto phip = find_isomorphism(bup.poset, bvp.poset);
    if (!phim || !phip) fail("NoBoundaryIso", "input or output boundaries are not isomorphic");

    // combined map: V boundary element -> U boundary element
    std::vector<std::vector<ElemRef>> v_to_u(V->dim() + 1);
    for (int d = 0; d <= V->dim(); ++d) v_to_u[d].assign(V->size(d), ElemRef{-1, -1});
    auto record = [&](const Extracted& bu, const Extracted& bv, const GradedFunction& phi) {
        for (int d = 0; d <= bu.poset->dim(); ++d)
            for (int i = 0; i < bu.poset->size(d); ++i) {
                ElemRef in_v = bv.emb.map[d][phi.map[d][i].idx];
                ElemRef in_u = bu.emb.map[d][i];
                ElemRef& slot = v_to_u[in_v.dim][in_v.idx];
                if (slot.dim >= 0 && !(slot == in_u))
                    fail("NoBoundaryIso", "boundary isomorphisms disagree on the shared lower boundary");
                slot = in_u;
            }
    };
    record(bum, bvm, *phim);
    record(bup, bvp, *phip);

    std::vector<std::vector<Faces>> strata(n + 2);
    std::vector<std::vector<ElemRef>> u_map(U->dim() + 1), v_map(V->dim() + 1);
    for (int d = 0; d <= U->dim(); ++d)
        for (int i = 0; i < U->size(d); ++i) {
            u_map[d].push_back({d, (int)strata[d].size()});
            strata[d].push_back(U->faces({d, i}));
        }
    for (int d = 0; d <= V->dim(); ++d) {
        v_map[d].resize(V->size(d));
        for (int i = 0; i < V->size(d); ++i)
            v_map[d][i] = v_to_u[d][i].dim >= 0 ? u_map[d][v_to_u[d][i].idx] : ElemRef{d, -1};
    }
    for (int d = 0; d <= V->dim(); ++d)
        for (int i = 0; i < V->size(d); ++i) {
            if (v_map[d][i].idx >= 0) continue;
            Faces nf;
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : V->faces({d, i}).side(a)) nf.side(a).push_back(v_map[d - 1][j].idx);
            v_map[d][i] = {d, (int)strata[d].size()};
            strata[d].push_back(std::move(nf));
        }
    Faces top;
    for (int i = 0; i < (n >= 0 ? (int)u_map[n].size() : 0); ++i) top.in.push_back(u_map[n][i].idx);
    for (int i = 0; i < (n >= 0 ? V->size(n) : 0); ++i) top.out.push_back(v_map[n][i].idx);
    strata[n + 1].push_back(std::move(top));

    PosetPtr carrier = OgPoset::make(std::move(strata));
    auto c = std::make_shared<MoleculeCert>();
    c->kind = MoleculeCert::Kind::atom;
    c->carrier = carrier;
    c->left = u;
    c->right = v;
    c->emb_left = make_emb(U, carrier, u_map);
    c->emb_right = make_emb(V, carrier, v_map);
    return c;
}

// --- recognition ------------------------------------------------------------

namespace {

struct FlowGraph {
    std::vector<ElemRef> nodes;
    std::vector<std::vector<int>> adj;   // edges i -> j
    std::vector<int> scc_of;             // node -> scc id (ids topologically ordered)
    int n_scc = 0;
    std::vector<std::vector<int>> scc_members;
    std::vector<std::set<int>> scc_preds;
};

FlowGraph flow_graph(const Subset& within, int k) {
    FlowGraph g;
    for (auto x : within.maximal_in())
        if (x.dim > k) g.nodes.push_back(x);
    const int n = (int)g.nodes.size();
    g.adj.resize(n);
    std::vector<Subset> outs, ins;
    PosetPtr P = within.owner();
    for (auto x : g.nodes) {
        Subset clx = closure_of(P, {x});
        outs.push_back(boundary(clx, k, SignArg::plus));
        ins.push_back(boundary(clx, k, SignArg::minus));
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            Subset meet = outs[i].set_intersection(ins[j]);
            if (!meet.elements_of_dim(k).empty()) g.adj[i].push_back(j);
        }
    // Tarjan SCC
    std::vector<int> index(n, -1), low(n, 0), stk;
    std::vector<char> on(n, 0);
    int counter = 0;
    std::vector<std::vector<int>> comps;
    struct Frame { int v; size_t ei; };
    for (int s = 0; s < n; ++s) {
        if (index[s] >= 0) continue;
        std::vector<Frame> call{{s, 0}};
        index[s] = low[s] = counter++;
        stk.push_back(s);
        on[s] = 1;
        while (!call.empty()) {
            auto& fr = call.back();
            if (fr.ei < g.adj[fr.v].size()) {
                int w = g.adj[fr.v][fr.ei++];
                if (index[w] < 0) {
                    index[w] = low[w] = counter++;
                    stk.push_back(w);
                    on[w] = 1;
                    call.push_back({w, 0});
                } else if (on[w])
                    low[fr.v] = std::min(low[fr.v], index[w]);
            } else {
                if (low[fr.v] == index[fr.v]) {
                    std::vector<int> comp;
                    while (true) {
                        int w = stk.back();
                        stk.pop_back();
                        on[w] = 0;
                        comp.push_back(w);
                        if (w == fr.v) break;
                    }
                    comps.push_back(comp);
                }
                int v = fr.v;
                call.pop_back();
                if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            }
        }
    }
    // topological order of components (Tarjan emits reverse topological)
    std::reverse(comps.begin(), comps.end());
    g.n_scc = (int)comps.size();
    g.scc_members = comps;
    g.scc_of.assign(n, -1);
    for (int c = 0; c < g.n_scc; ++c)
        for (int v : comps[c]) g.scc_of[v] = c;
    g.scc_preds.resize(g.n_scc);
    for (int v = 0; v < n; ++v)
        for (int w : g.adj[v])
            if (g.scc_of[v] != g.scc_of[w]) g.scc_preds[g.scc_of[w]].insert(g.scc_of[v]);
    return g;
}

bool verify_split(const Subset& within, int k, const Subset& a, const Subset& b, Subset* glue_out) {
    if (!(a.set_union(b) == within)) return false;
    Subset glue = a.set_intersection(b);
    Subset bap = boundary(a, k, SignArg::plus);
    Subset bbm = boundary(b, k, SignArg::minus);
    if (!(glue == bap) || !(glue == bbm)) return false;
    if (glue_out) *glue_out = glue;
    return true;
}

std::pair<Subset, Subset> split_halves(const Subset& within, int k,
                                       const std::vector<ElemRef>& m1,
                                       const std::vector<ElemRef>& m2) {
    PosetPtr P = within.owner();
    Subset a = closure_of(P, m1).set_union(boundary(within, k, SignArg::minus));
    Subset b = closure_of(P, m2).set_union(boundary(within, k, SignArg::plus));
    return {a, b};
}

}  // namespace

std::vector<std::pair<Subset, Subset>> binary_splits(PosetPtr p, int k) {
    std::vector<std::pair<Subset, Subset>> out;
    Subset whole = Subset::whole(p);
    FlowGraph g = flow_graph(whole, k);
    const int n = (int)g.nodes.size();
    if (n < 2) return out;
    const int c = g.n_scc;
    if (c > 20) fail("NotGraded", "flow graph too large for split enumeration");
    for (uint32_t mask = 1; mask + 1 < (1u << c); ++mask) {
        bool down = true;
        for (int s = 0; s < c && down; ++s)
            if (mask & (1u << s))
                for (int pre : g.scc_preds[s])
                    if (!(mask & (1u << pre))) { down = false; break; }
        if (!down) continue;
        std::vector<ElemRef> m1, m2;
        for (int s = 0; s < c; ++s)
            for (int v : g.scc_members[s])
                (mask & (1u << s) ? m1 : m2).push_back(g.nodes[v]);
        auto [a, b] = split_halves(whole, k, m1, m2);
        if (verify_split(whole, k, a, b, nullptr)) out.push_back({a, b});
    }
    return out;
}

namespace {

struct RecMemo {
    std::mutex mu;
    std::map<std::string, std::optional<CertPtr>> entries;  // over canonical carriers
};
RecMemo& rec_memo() {
    static RecMemo m;
    return m;
}

std::optional<CertPtr> recognize_canonical(PosetPtr c);

std::optional<CertPtr> recognize_extracted(const Subset& sub) {
    return recognize_molecule(extract(sub).poset);
}

std::optional<CertPtr> recognize_impl(PosetPtr c) {
    for (int d = 1; d <= c->dim(); ++d)
        for (int i = 0; i < c->size(d); ++i) {
            const Faces& f = c->faces({d, i});
            if (f.in.empty() || f.out.empty()) return std::nullopt;
        }
    if (!check_oriented_thinness(c).ok) return std::nullopt;
    if (c->total_size() == 1) return point();
    Subset whole = Subset::whole(c);
    if (auto g = c->greatest()) {
        const int n = c->dim();
        if (g->dim != n) return std::nullopt;
        Extracted bm = extract(boundary(whole, n - 1, SignArg::minus));
        Extracted bp = extract(boundary(whole, n - 1, SignArg::plus));
        auto cu = recognize_molecule(bm.poset);
        auto cv = recognize_molecule(bp.poset);
        if (!cu || !cv) return std::nullopt;
        if (!is_round(bm.poset) || !is_round(bp.poset)) return std::nullopt;
        try {
            CertPtr built = atom(*cu, *cv);
            auto phi = find_isomorphism(built->carrier, c);
            if (!phi) return std::nullopt;
            return rebase_cert(built, *phi);
        } catch (const Error&) {
            return std::nullopt;
        }
    }
    for (int k = c->dim() - 1; k >= 0; --k) {
        for (auto& [a, b] : binary_splits(c, k)) {
            Extracted ea = extract(a), eb = extract(b);
            auto ca = recognize_molecule(ea.poset);
            if (!ca) continue;
            auto cb = recognize_molecule(eb.poset);
            if (!cb) continue;
            auto node = std::make_shared<MoleculeCert>();
            node->kind = MoleculeCert::Kind::paste;
            node->k = k;
            node->carrier = c;
            node->left = *ca;
            node->right = *cb;
            node->emb_left = ea.emb;
            node->emb_right = eb.emb;
            return node;
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<CertPtr> recognize_molecule(PosetPtr p) {
    if (p->empty()) return std::nullopt;
    Canonical canon = canonical_form(p);
    {
        std::lock_guard<std::mutex> g(rec_memo().mu);
        auto it = rec_memo().entries.find(canon.key);
        if (it != rec_memo().entries.end()) {
            if (!it->second) return std::nullopt;
            // rebase stored cert (over the canonical carrier) onto p
            auto back = find_isomorphism((*it->second)->carrier, p);
            return rebase_cert(*it->second, *back);
        }
    }
    auto res = recognize_impl(canon.poset);
    {
        std::lock_guard<std::mutex> g(rec_memo().mu);
        rec_memo().entries[canon.key] = res;
    }
    if (!res) return std::nullopt;
    auto back = find_isomorphism((*res)->carrier, p);
    return rebase_cert(*res, *back);
}

bool is_molecule(PosetPtr p) { return recognize_molecule(p).has_value(); }

bool is_atom_poset(PosetPtr p) {
    return p->greatest().has_value() && is_molecule(p);
}

bool is_regular(PosetPtr p) {
    for (int d = 0; d <= p->dim(); ++d)
        for (int i = 0; i < p->size(d); ++i) {
            Extracted e = extract(closure_of(p, {{d, i}}));
            if (!is_atom_poset(e.poset)) return false;
        }
    return true;
}

CertPtr merger_of(PosetPtr u) {
    if (!is_round(u)) fail("NotRound", "merger requires a round molecule");
    Subset whole = Subset::whole(u);
    Extracted bm = extract(boundary(whole, -2, SignArg::minus));
    Extracted bp = extract(boundary(whole, -2, SignArg::plus));
    auto cu = recognize_molecule(bm.poset);
    auto cv = recognize_molecule(bp.poset);
    if (!cu || !cv) fail("NotRound", "boundaries of the round molecule fail to certify");
    return atom(*cu, *cv);
}

CertPtr merger(const CertPtr& u) { return merger_of(u->carrier); }

// --- layerings ---------------------------------------------------------------

namespace {

void layerings_rec(PosetPtr owner, int k, const Subset& rem, std::vector<Subset>& acc,
                   std::vector<Layering>& out, size_t limit) {
    if (out.size() >= limit) return;
    FlowGraph g = flow_graph(rem, k);
    const int nn = (int)g.nodes.size();
    if (nn <= 1) {
        if (!recognize_extracted(rem)) return;
        Layering l;
        l.k = k;
        l.parts = acc;
        l.parts.push_back(rem);
        for (auto& s : l.parts) {
            auto c = recognize_extracted(s);
            if (!c) return;
            l.part_certs.push_back(*c);
        }
        out.push_back(std::move(l));
        return;
    }
    bool advanced = false;
    // sources in the condensation, in deterministic order
    for (int s = 0; s < g.n_scc; ++s) {
        if (!g.scc_preds[s].empty()) continue;
        std::vector<ElemRef> m1, m2;
        for (int v : g.scc_members[s]) m1.push_back(g.nodes[v]);
        for (int t = 0; t < g.n_scc; ++t)
            if (t != s)
                for (int v : g.scc_members[t]) m2.push_back(g.nodes[v]);
        auto [a, b] = split_halves(rem, k, m1, m2);
        if (!verify_split(rem, k, a, b, nullptr)) continue;
        if (!recognize_extracted(a)) continue;
        advanced = true;
        acc.push_back(a);
        layerings_rec(owner, k, b, acc, out, limit);
        acc.pop_back();
    }
    if (!advanced) {
        // fall back to coarser prefixes: any proper down-closed SCC union
        const int c = g.n_scc;
        std::vector<uint32_t> masks;
        for (uint32_t mask = 1; mask + 1 < (1u << c); ++mask) {
            bool down = true;
            for (int s = 0; s < c && down; ++s)
                if (mask & (1u << s))
                    for (int pre : g.scc_preds[s])
                        if (!(mask & (1u << pre))) { down = false; break; }
            if (down) masks.push_back(mask);
        }
        std::stable_sort(masks.begin(), masks.end(), [](uint32_t x, uint32_t y) {
            return __builtin_popcount(x) < __builtin_popcount(y);
        });
        for (uint32_t mask : masks) {
            std::vector<ElemRef> m1, m2;
            for (int s = 0; s < c; ++s)
                for (int v : g.scc_members[s]) (mask & (1u << s) ? m1 : m2).push_back(g.nodes[v]);
            auto [a, b] = split_halves(rem, k, m1, m2);
            if (!verify_split(rem, k, a, b, nullptr)) continue;
            if (!recognize_extracted(a)) continue;
            acc.push_back(a);
            layerings_rec(owner, k, b, acc, out, limit);
            acc.pop_back();
            if (!out.empty()) break;  // coarse fallback: first workable granularity
        }
    }
}

}  // namespace

std::vector<Layering> layerings(const CertPtr& u, int k) {
    std::vector<Layering> out;
    PosetPtr c = u->carrier;
    Subset whole = Subset::whole(c);
    if (k >= c->dim()) {
        Layering l;
        l.k = k;
        l.parts = {whole};
        l.part_certs = {u};
        out.push_back(std::move(l));
        return out;
    }
    std::vector<Subset> acc;
    layerings_rec(c, k, whole, acc, out, 4096);
    return out;
}

// --- submolecules --------------------------------------------------------------

namespace {

std::string subset_key(const Subset& s) {
    std::ostringstream os;
    for (auto x : s.elements()) os << x.dim << ':' << x.idx << ',';
    return os.str();
}

bool submol_search(PosetPtr owner, const Subset& image, const Subset& current,
                   std::vector<SubmolWitness::Step>& steps, std::set<std::string>& seen) {
    if (image == current) {
        steps.push_back({"iso", -1, Sign::minus});
        return true;
    }
    std::string key = subset_key(current);
    if (!seen.insert(key).second) return false;
    Extracted cur = extract(current);
    const int d = cur.poset->dim();
    // boundary descent
    for (int k = 0; k < d; ++k)
        for (Sign a : {Sign::minus, Sign::plus}) {
            Subset bd = boundary(current, k, a == Sign::minus ? SignArg::minus : SignArg::plus);
            if (image.subset_of(bd) && !(bd == current)) {
                steps.push_back({"boundary", k, a});
                if (submol_search(owner, image, bd, steps, seen)) return true;
                steps.pop_back();
            }
        }
    // binary split descent
    for (int k = d - 1; k >= 0; --k) {
        FlowGraph g = flow_graph(current, k);
        const int c = g.n_scc;
        if ((int)g.nodes.size() < 2) continue;
        for (uint32_t mask = 1; mask + 1 < (1u << c); ++mask) {
            bool down = true;
            for (int s = 0; s < c && down; ++s)
                if (mask & (1u << s))
                    for (int pre : g.scc_preds[s])
                        if (!(mask & (1u << pre))) { down = false; break; }
            if (!down) continue;
            std::vector<ElemRef> m1, m2;
            for (int s = 0; s < c; ++s)
                for (int v : g.scc_members[s]) (mask & (1u << s) ? m1 : m2).push_back(g.nodes[v]);
            auto [a, b] = split_halves(current, k, m1, m2);
            if (!verify_split(current, k, a, b, nullptr)) continue;
            if (!recognize_extracted(a) || !recognize_extracted(b)) continue;
            for (const Subset* part : {&a, &b}) {
                if (!image.subset_of(*part)) continue;
                steps.push_back({"factor", k, part == &a ? Sign::minus : Sign::plus});
                if (submol_search(owner, image, *part, steps, seen)) return true;
                steps.pop_back();
            }
        }
    }
    return false;
}

}  // namespace

std::optional<SubmolWitness> is_submolecule(const GradedFunction& iota) {
    if (!is_embedding(iota)) fail("NotSubmolecule", "iota is not an embedding");
    Subset image = image_subset(iota);
    if (!image.is_closed()) fail("NotSubmolecule", "iota's image is not closed");
    Subset whole = Subset::whole(iota.target);
    std::vector<SubmolWitness::Step> steps;
    std::set<std::string> seen;
    if (!submol_search(iota.target, image, whole, steps, seen)) return std::nullopt;
    SubmolWitness w;
    w.steps = std::move(steps);
    w.inclusion = iota;
    return w;
}

CertPtr substitute(const CertPtr& u, const GradedFunction& iota, const CertPtr& v_cert,
                   const CertPtr& w) {
    PosetPtr U = u->carrier;
    const int n = U->dim();
    if (v_cert->carrier->dim() != n || w->carrier->dim() != n)
        fail("NotRewritable", "substitution requires a full-dimensional round submolecule and replacement");
    if (!is_round(v_cert->carrier) || !is_round(w->carrier))
        fail("NotRewritable", "substitution requires round V and W");
    if (!is_submolecule(iota)) fail("NotRewritable", "iota is not a submolecule inclusion");
    CertPtr rule;
    try {
        rule = atom(v_cert, w);
    } catch (const Error& e) {
        fail("BoundaryMismatch", std::string("V => W is not well-formed: ") + e.what());
    }
    // iota': bd^-(rule) = V -> U
    GradedFunction emb_v = rule->emb_left;  // V -> rule carrier
    // paste rule over U along iota (dual form: glue bd_n^-(rule) onto U = bd_n^+(U))
    // Build the pushout U cup_V rule directly.
    PosetPtr R = rule->carrier;
    std::vector<std::vector<ElemRef>> r_to_u(R->dim() + 1);
    for (int d = 0; d <= R->dim(); ++d) r_to_u[d].assign(R->size(d), ElemRef{-1, -1});
    PosetPtr V = v_cert->carrier;
    for (int d = 0; d <= V->dim(); ++d)
        for (int i = 0; i < V->size(d); ++i) {
            ElemRef in_r = emb_v.map[d][i];
            r_to_u[in_r.dim][in_r.idx] = iota.map[d][i];
        }
    std::vector<std::vector<Faces>> strata(std::max(U->dim(), R->dim()) + 1);
    std::vector<std::vector<ElemRef>> u_map(U->dim() + 1), r_map(R->dim() + 1);
    for (int d = 0; d <= U->dim(); ++d)
        for (int i = 0; i < U->size(d); ++i) {
            u_map[d].push_back({d, (int)strata[d].size()});
            strata[d].push_back(U->faces({d, i}));
        }
    for (int d = 0; d <= R->dim(); ++d) {
        r_map[d].resize(R->size(d));
        for (int i = 0; i < R->size(d); ++i)
            r_map[d][i] = r_to_u[d][i].dim >= 0 ? u_map[d][r_to_u[d][i].idx] : ElemRef{d, -1};
    }
    for (int d = 0; d <= R->dim(); ++d)
        for (int i = 0; i < R->size(d); ++i) {
            if (r_map[d][i].idx >= 0) continue;
            Faces nf;
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : R->faces({d, i}).side(a)) nf.side(a).push_back(r_map[d - 1][j].idx);
            r_map[d][i] = {d, (int)strata[d].size()};
            strata[d].push_back(std::move(nf));
        }
    PosetPtr big = OgPoset::make(std::move(strata));
    Subset result = boundary(Subset::whole(big), n, SignArg::plus);
    Extracted res = extract(result);
    auto cert = recognize_molecule(res.poset);
    if (!cert) fail("BoundaryMismatch", "substitution result failed molecule recognition");
    return *cert;
}

// --- serialization --------------------------------------------------------------

json MoleculeCert::to_json() const {
    switch (kind) {
        case Kind::point:
            return json{{"clause", "point"}};
        case Kind::paste:
            return json{{"clause", "paste"}, {"k", k}, {"left", left->to_json()},
                        {"right", right->to_json()}};
        case Kind::atom:
            return json{{"clause", "atom"}, {"left", left->to_json()}, {"right", right->to_json()}};
    }
    fail("DanglingRef", "corrupt certificate");
}

CertPtr MoleculeCert::from_json(const json& j) {
    std::string clause = j.at("clause").get<std::string>();
    if (clause == "point") return point();
    CertPtr l = from_json(j.at("left"));
    CertPtr r = from_json(j.at("right"));
    if (clause == "paste") return paste(l, r, j.at("k").get<int>());
    if (clause == "atom") return atom(l, r);
    fail("DanglingRef", "unknown certificate clause " + clause);
}

// --- atlas -----------------------------------------------------------------------

std::vector<CertPtr> Atlas::atoms() const {
    std::vector<CertPtr> out;
    for (auto& c : molecules)
        if (c->carrier->greatest()) out.push_back(c);
    return out;
}

std::vector<CertPtr> Atlas::rounds() const {
    std::vector<CertPtr> out;
    for (auto& c : molecules)
        if (is_round(c->carrier)) out.push_back(c);
    return out;
}

Atlas enumerate_molecules(int max_elems, int max_dim) {
    Atlas atlas;
    std::set<std::string> seen;
    struct Entry {
        CertPtr cert;
        bool round;
        std::vector<std::string> bminus, bplus;  // canonical keys of bd_k^-/+, k < dim
    };
    std::vector<Entry> pool;
    std::deque<int> work;

    auto add = [&](CertPtr c) -> void {
        if (c->carrier->total_size() > max_elems || c->carrier->dim() > max_dim) return;
        Canonical canon = canonical_form(c->carrier);
        if (!seen.insert(canon.key).second) return;
        CertPtr cc = rebase_cert(c, canon.to_canonical);
        Entry e;
        e.cert = cc;
        e.round = is_round(cc->carrier);
        Subset whole = Subset::whole(cc->carrier);
        for (int k = 0; k < cc->carrier->dim(); ++k) {
            e.bminus.push_back(canonical_key(extract(boundary(whole, k, SignArg::minus)).poset));
            e.bplus.push_back(canonical_key(extract(boundary(whole, k, SignArg::plus)).poset));
        }
        pool.push_back(std::move(e));
        work.push_back((int)pool.size() - 1);
    };

    add(point());
    while (!work.empty()) {
        int i = work.front();
        work.pop_front();
        // copy-by-value: pool may grow and reallocate
        for (size_t j = 0; j < pool.size(); ++j) {
            Entry a = pool[i], b = pool[j];
            for (int dir = 0; dir < 2; ++dir) {
                const Entry& l = dir == 0 ? a : b;
                const Entry& r = dir == 0 ? b : a;
                if (dir == 1 && i == (int)j) continue;
                int kmax = std::min(l.cert->carrier->dim(), r.cert->carrier->dim()) - 1;
                for (int k = 0; k <= std::max(0, kmax); ++k) {
                    if (k >= (int)l.bplus.size() || k >= (int)r.bminus.size()) continue;
                    if (l.bplus[k] != r.bminus[k]) continue;
                    // size estimate: |glue| elements are identified
                    try {
                        CertPtr pc = paste(l.cert, r.cert, k);
                        add(pc);
                    } catch (const Error&) {
                    }
                }
                if (l.round && r.round &&
                    l.cert->carrier->dim() == r.cert->carrier->dim() &&
                    l.cert->carrier->dim() + 1 <= max_dim) {
                    int bd = l.cert->carrier->dim() - 1;
                    bool match = bd < 0 || (bd < (int)l.bminus.size() && l.bminus[bd] == r.bminus[bd] &&
                                            l.bplus[bd] == r.bplus[bd]);
                    if (match) {
                        try {
                            CertPtr ac = atom(l.cert, r.cert);
                            add(ac);
                        } catch (const Error&) {
                        }
                    }
                }
                if (i == (int)j) break;  // (a,a) once
            }
        }
    }
    std::stable_sort(pool.begin(), pool.end(), [](const Entry& x, const Entry& y) {
        auto kx = std::make_tuple(x.cert->carrier->total_size(), x.cert->carrier->dim(),
                                  x.cert->carrier->key());
        auto ky = std::make_tuple(y.cert->carrier->total_size(), y.cert->carrier->dim(),
                                  y.cert->carrier->key());
        return kx < ky;
    });
    for (auto& e : pool) atlas.molecules.push_back(e.cert);
    return atlas;
}

}  // namespace rdcx
