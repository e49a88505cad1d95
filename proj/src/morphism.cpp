#include "rdcx/morphism.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rdcx/construct.hpp"

namespace rdcx {

json MorphismClass::to_json() const {
    return json{{"collapse", collapse},
                {"comap", comap},
                {"cylindrical_collapse", cylindrical_collapse},
                {"final", final},
                {"local_collapse", local_collapse},
                {"local_embedding", local_embedding},
                {"map", map}};
}

// --- zig-zag connectivity --------------------------------------------------

namespace {

// Within `domain` (a set of source elements), elements mapping to equal values
// must be connected through elements whose image dominates that value.
bool zigzag_condition(const GradedFunction& f, const std::vector<ElemRef>& domain) {
    std::map<std::pair<int, int>, std::vector<int>> by_value;
    for (int i = 0; i < (int)domain.size(); ++i) {
        ElemRef v = f(domain[i]);
        by_value[{v.dim, v.idx}].push_back(i);
    }
    for (auto& [vkey, idxs] : by_value) {
        if (idxs.size() < 2) continue;
        ElemRef v{vkey.first, vkey.second};
        // filter: domain elements whose image dominates v
        std::vector<int> filt;
        std::map<std::pair<int, int>, int> pos;
        for (int i = 0; i < (int)domain.size(); ++i)
            if (f.target->le(v, f(domain[i]))) {
                pos[{domain[i].dim, domain[i].idx}] = (int)filt.size();
                filt.push_back(i);
            }
        // union-find over filt with covering edges inside the filtered set
        std::vector<int> uf(filt.size());
        for (size_t i = 0; i < uf.size(); ++i) uf[i] = (int)i;
        std::function<int(int)> find = [&](int a) {
            while (uf[a] != a) a = uf[a] = uf[uf[a]];
            return a;
        };
        for (size_t i = 0; i < filt.size(); ++i) {
            ElemRef x = domain[filt[i]];
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : f.source->faces(x).side(a)) {
                    auto it = pos.find({x.dim - 1, j});
                    if (it != pos.end()) uf[find((int)i)] = find(it->second);
                }
        }
        int root = -1;
        for (int i : idxs) {
            auto it = pos.find({domain[i].dim, domain[i].idx});
            if (it == pos.end()) return false;
            int r = find(it->second);
            if (root < 0)
                root = r;
            else if (root != r)
                return false;
        }
    }
    return true;
}

bool map_condition(const GradedFunction& f) {
    for (int d = 0; d <= f.source->dim(); ++d)
        for (int i = 0; i < f.source->size(d); ++i) {
            ElemRef x{d, i};
            Subset clx = closure_of(f.source, {x});
            Subset clfx = closure_of(f.target, {f(x)});
            int nmax = std::max(d, f(x).dim);
            for (int n = 0; n <= nmax; ++n)
                for (SignArg a : {SignArg::minus, SignArg::plus}) {
                    Subset bd_src = boundary(clx, n, a);
                    Subset bd_tgt = boundary(clfx, n, a);
                    // image equality
                    Subset img(f.target);
                    for (auto y : bd_src.elements()) img.add(f(y));
                    if (!(img == bd_tgt)) return false;
                    if (!zigzag_condition(f, bd_src.elements())) return false;
                }
        }
    return true;
}

bool comap_condition(const GradedFunction& f) {
    for (int d = 0; d <= f.target->dim(); ++d)
        for (int i = 0; i < f.target->size(d); ++i) {
            ElemRef y{d, i};
            Subset cly = closure_of(f.target, {y});
            Subset fib = preimage(f, cly);
            if (fib.is_empty()) return false;
            if (!fib.is_closed()) return false;
            Extracted e = extract(fib);
            if (!is_molecule(e.poset)) return false;
            for (int n = 0; n <= d; ++n)
                for (SignArg a : {SignArg::minus, SignArg::plus}) {
                    if (!(boundary(fib, n, a) == preimage(f, boundary(cly, n, a)))) return false;
                }
        }
    return true;
}

bool try_factor_collapse(const GradedFunction& p);

bool local_collapse_condition(const GradedFunction& f) {
    for (int d = 0; d <= f.source->dim(); ++d)
        for (int i = 0; i < f.source->size(d); ++i) {
            ElemRef x{d, i};
            Extracted clx = extract(closure_of(f.source, {x}));
            Extracted clfx = extract(closure_of(f.target, {f(x)}));
            GradedFunction r = corestrict(restrict_function(f, clx), clfx);
            if (!is_surjective(r)) return false;
            if (!try_factor_collapse(r)) return false;
        }
    return true;
}

struct ClassMemo {
    std::mutex mu;
    std::map<std::string, MorphismClass> entries;
};
ClassMemo& class_memo() {
    static ClassMemo m;
    return m;
}

std::string fn_key(const GradedFunction& f) {
    std::ostringstream os;
    os << f.source->key() << '>' << f.target->key() << '#';
    for (auto& row : f.map)
        for (auto& t : row) os << t.dim << ':' << t.idx << ',';
    return os.str();
}

}  // namespace

MorphismClass classify_morphism(const GradedFunction& f) {
    if (!is_order_preserving(f))
        fail("NotOrderPreserving", "the assignment does not preserve the face order");
    std::string key = fn_key(f);
    {
        std::lock_guard<std::mutex> g(class_memo().mu);
        auto it = class_memo().entries.find(key);
        if (it != class_memo().entries.end()) return it->second;
    }
    MorphismClass c;
    c.local_embedding = is_local_embedding(f);
    c.map = map_condition(f);
    if (c.map) {
        std::vector<ElemRef> all;
        for (int d = 0; d <= f.source->dim(); ++d)
            for (int i = 0; i < f.source->size(d); ++i) all.push_back({d, i});
        c.final = zigzag_condition(f, all);
    }
    c.comap = comap_condition(f);
    c.local_collapse = c.map && local_collapse_condition(f);
    c.collapse = c.local_collapse && c.final;
    c.cylindrical_collapse = c.local_collapse && f.source->greatest().has_value() &&
                             f.target->greatest().has_value() && is_surjective(f);
    {
        std::lock_guard<std::mutex> g(class_memo().mu);
        class_memo().entries[key] = c;
    }
    return c;
}

// --- collapse factorization ----------------------------------------------------

namespace {

// The two distinguished top faces of a non-invertible collapse p : U ->> V:
// x^a is the unique cell of faces^a(top U) mapped onto top V such that its face
// set meets every other such cell only in the prescribed signed pattern.
std::optional<ElemRef> distinguished_face(const GradedFunction& p, Sign a) {
    ElemRef gu = *p.source->greatest();
    ElemRef gv = *p.target->greatest();
    std::vector<ElemRef> xs;
    for (int j : p.source->faces(gu).side(a))
        if (p(ElemRef{gu.dim - 1, j}) == gv) xs.push_back({gu.dim - 1, j});
    std::optional<ElemRef> found;
    for (auto cand : xs) {
        bool ok = true;
        for (auto other : xs) {
            if (other == cand) continue;
            const Faces& fc = p.source->faces(cand);
            const Faces& fo = p.source->faces(other);
            auto all = [](const Faces& f) {
                std::set<int> s(f.in.begin(), f.in.end());
                s.insert(f.out.begin(), f.out.end());
                return s;
            };
            std::set<int> meet;
            for (int j : all(fc))
                if (all(fo).count(j)) meet.insert(j);
            std::set<int> pattern;
            for (int j : fc.side(flip(a)))
                if (std::binary_search(fo.side(a).begin(), fo.side(a).end(), j)) pattern.insert(j);
            if (meet != pattern) { ok = false; break; }
        }
        if (ok) {
            if (found) return std::nullopt;  // not unique
            found = cand;
        }
    }
    return found;
}

CollapseFactorization factor_collapse_impl(const GradedFunction& p) {
    if (!p.source->greatest() || !p.target->greatest())
        fail("NotACollapse", "collapse factorization is defined between atoms");
    if (!is_order_preserving(p)) fail("NotACollapse", "not order-preserving");
    if (!is_surjective(p)) fail("NotACollapse", "not surjective");
    const int m = p.source->dim() - p.target->dim();
    if (m < 0) fail("NotACollapse", "dimension increases");
    CollapseFactorization out;
    if (m == 0) {
        if (!is_embedding(p)) fail("NotACollapse", "degenerate collapse is not an isomorphism");
        out.stages = {p.target};
        out.iso = p;
        return out;
    }
    auto xm = distinguished_face(p, Sign::minus);
    auto xp = distinguished_face(p, Sign::plus);
    if (!xm || !xp) fail("NotACollapse", "distinguished top faces are not unique");
    Subset clm = closure_of(p.source, {*xm});
    Subset clp = closure_of(p.source, {*xp});
    Extracted Cm = extract(clm), Cp = extract(clp);
    // recurse on the section image
    CollapseFactorization sub = factor_collapse_impl(restrict_function(p, Cm));
    PosetPtr Wprev = sub.stages.back();
    const GradedFunction& phi_prev = sub.iso;  // Cm.poset -> Wprev

    // K = image of cl{x-} /\ cl{x+} under phi_prev
    Subset inter = clm.set_intersection(clp);
    Subset K(Wprev);
    std::vector<std::vector<int>> cm_index(p.source->dim() + 1);
    for (int d = 0; d <= p.source->dim(); ++d) cm_index[d].assign(p.source->size(d), -1);
    for (int d = 0; d <= Cm.poset->dim(); ++d)
        for (int i = 0; i < Cm.poset->size(d); ++i) {
            ElemRef o = Cm.emb.map[d][i];
            cm_index[o.dim][o.idx] = i;
        }
    for (auto z : inter.elements()) K.add(phi_prev.map[z.dim][cm_index[z.dim][z.idx]]);
    if (!K.is_closed()) fail("NotACollapse", "collapsed region is not closed");
    if (!K.subset_of(whole_boundary(Subset::whole(Wprev))))
        fail("NotACollapse", "collapsed region is not inside the stage boundary");
    CylinderResult cyl = partial_cylinder({Wprev, K});

    // chi: Cp -> Cm, the unique isomorphism of atoms
    auto chi = find_isomorphism(Cp.poset, Cm.poset);
    if (!chi) fail("NotACollapse", "the two section images are not isomorphic");
    std::vector<std::vector<int>> cp_index(p.source->dim() + 1);
    for (int d = 0; d <= p.source->dim(); ++d) cp_index[d].assign(p.source->size(d), -1);
    for (int d = 0; d <= Cp.poset->dim(); ++d)
        for (int i = 0; i < Cp.poset->size(d); ++i) {
            ElemRef o = Cp.emb.map[d][i];
            cp_index[o.dim][o.idx] = i;
        }

    GradedFunction phi;
    phi.source = p.source;
    phi.target = cyl.poset;
    phi.map.resize(p.source->dim() + 1);
    for (int d = 0; d <= p.source->dim(); ++d) phi.map[d].assign(p.source->size(d), ElemRef{-1, -1});
    for (int d = 0; d <= p.source->dim(); ++d)
        for (int i = 0; i < p.source->size(d); ++i) {
            ElemRef z{d, i};
            if (clm.contains(z)) {
                ElemRef w = phi_prev.map[d][cm_index[d][i]];
                phi.map[d][i] = inter.contains(z) ? cyl.of(-1, w) : cyl.of(0, w);
            } else if (clp.contains(z)) {
                ElemRef in_cm = (*chi).map[d][cp_index[d][i]];
                ElemRef w = phi_prev.map[in_cm.dim][in_cm.idx];
                phi.map[d][i] = cyl.of(2, w);
            }
        }
    for (int d = 0; d <= p.source->dim(); ++d)
        for (int i = 0; i < p.source->size(d); ++i) {
            ElemRef z{d, i};
            if (phi.map[d][i].dim >= 0) continue;
            // lid element: unique input face inside cl{x-} \ inter
            std::optional<ElemRef> base;
            for (int j : p.source->faces(z).in) {
                ElemRef y{d - 1, j};
                if (clm.contains(y) && !inter.contains(y)) {
                    if (base) fail("NotACollapse", "ambiguous lid attachment");
                    base = y;
                }
            }
            if (!base) fail("NotACollapse", "lid element without section face");
            ElemRef w = phi_prev.map[base->dim][cm_index[base->dim][base->idx]];
            phi.map[d][i] = cyl.of(1, w);
        }
    if (!is_embedding(phi) || !is_surjective(phi))
        fail("NotACollapse", "stage parametrisation is not an isomorphism");

    out = sub;
    out.stages.push_back(cyl.poset);
    out.k_subsets.push_back(K);
    out.taus.push_back(cyl.tau);
    out.iso = phi;
    // replay check
    GradedFunction re = out.replay();
    if (!same_function(re, p)) fail("NotACollapse", "factorization replay mismatch");
    return out;
}

bool try_factor_collapse(const GradedFunction& p) {
    try {
        factor_collapse_impl(p);
        return true;
    } catch (const Error&) {
        return false;
    }
}

}  // namespace

GradedFunction CollapseFactorization::replay() const {
    GradedFunction f = iso;
    for (int i = (int)taus.size() - 1; i >= 0; --i) f = compose(taus[i], f);
    return f;
}

json CollapseFactorization::to_json() const {
    json ks = json::array();
    for (int i = (int)k_subsets.size() - 1; i >= 0; --i)
        ks.push_back(json{{"k", k_subsets[i].members_json()},
                          {"stage", stages[i]->to_json()}});
    return json{{"iso", iso.to_json()}, {"length", (int)k_subsets.size()}, {"stages_outward", ks}};
}

CollapseFactorization factor_collapse(const GradedFunction& p) {
    CollapseFactorization f = factor_collapse_impl(p);
    // the factored map must also satisfy the map condition (collapses are maps)
    MorphismClass c = classify_morphism(p);
    if (!c.map) fail("NotACollapse", "the factored function is not a map");
    return f;
}

std::vector<GradedFunction> sections_of_collapse(const GradedFunction& p) {
    if (!try_factor_collapse(p)) fail("NotACollapse", "sections are defined for collapses of atoms");
    std::vector<GradedFunction> out;
    PosetPtr U = p.source, V = p.target;
    GradedFunction j;
    j.source = V;
    j.target = U;
    j.map.resize(V->dim() + 1);
    for (int d = 0; d <= V->dim(); ++d) j.map[d].assign(V->size(d), ElemRef{-1, -1});
    std::function<void(int, int)> rec = [&](int d, int i) {
        if (d > V->dim()) {
            if (is_embedding(j)) out.push_back(j);
            return;
        }
        if (i == V->size(d)) {
            rec(d + 1, 0);
            return;
        }
        ElemRef v{d, i};
        for (int ud = 0; ud <= U->dim(); ++ud) {
            if (ud != d) continue;  // sections are embeddings: dimension-preserving
            for (int ui = 0; ui < U->size(ud); ++ui) {
                if (!(p.map[ud][ui] == v)) continue;
                // face compatibility with already chosen entries
                bool ok = true;
                for (Sign a : {Sign::minus, Sign::plus}) {
                    const auto& vs = V->faces(v).side(a);
                    const auto& us = U->faces({ud, ui}).side(a);
                    if (vs.size() != us.size()) { ok = false; break; }
                    for (int vj : vs) {
                        ElemRef m = j.map[d - 1][vj];
                        if (m.dim >= 0 && !std::binary_search(us.begin(), us.end(), m.idx)) {
                            ok = false;
                            break;
                        }
                    }
                    if (!ok) break;
                }
                if (!ok) continue;
                j.map[d][i] = {ud, ui};
                rec(d, i + 1);
                j.map[d][i] = {-1, -1};
            }
        }
    };
    rec(0, 0);
    return out;
}

// --- (C, L) factorization ---------------------------------------------------------

CLFactorization factor_CL(const GradedFunction& f) {
    MorphismClass c = classify_morphism(f);
    if (!c.local_collapse) fail("NotLocalCollapse", "(C, L) factorization requires a local collapse");
    PosetPtr P = f.source, Q = f.target;
    // classes: x ~ y iff f x = f y and connected through elements dominating the value
    std::vector<std::vector<int>> cls(P->dim() + 1);
    for (int d = 0; d <= P->dim(); ++d) cls[d].assign(P->size(d), -1);
    int n_cls = 0;
    std::vector<ElemRef> cls_value;
    for (int d = 0; d <= P->dim(); ++d)
        for (int i = 0; i < P->size(d); ++i) {
            if (cls[d][i] >= 0) continue;
            ElemRef v = f.map[d][i];
            // flood within {z : f z >= v} from (d, i); mark same-value elements
            std::vector<ElemRef> stack{{d, i}};
            std::set<std::pair<int, int>> seen{{d, i}};
            std::vector<ElemRef> members;
            while (!stack.empty()) {
                ElemRef z = stack.back();
                stack.pop_back();
                if (f(z) == v) members.push_back(z);
                auto push = [&](ElemRef w) {
                    if (!Q->le(v, f(w))) return;
                    if (seen.insert({w.dim, w.idx}).second) stack.push_back(w);
                };
                for (Sign a : {Sign::minus, Sign::plus}) {
                    for (int j : P->faces(z).side(a)) push({z.dim - 1, j});
                    for (int j : P->cofaces(z).side(a)) push({z.dim + 1, j});
                }
            }
            for (auto z : members) cls[z.dim][z.idx] = n_cls;
            cls_value.push_back(v);
            ++n_cls;
        }
    // middle poset: one element per class, dimension of its value
    std::vector<std::vector<int>> by_dim;  // per dim, class ids
    int qd = 0;
    for (auto v : cls_value) qd = std::max(qd, v.dim);
    by_dim.resize(qd + 1);
    std::vector<std::pair<int, int>> cls_pos(n_cls);
    for (int cid = 0; cid < n_cls; ++cid) {
        int d = cls_value[cid].dim;
        cls_pos[cid] = {d, (int)by_dim[d].size()};
        by_dim[d].push_back(cid);
    }
    std::vector<std::vector<Faces>> strata(qd + 1);
    for (int d = 0; d <= qd; ++d) strata[d].resize(by_dim[d].size());
    for (int d = 0; d <= P->dim(); ++d)
        for (int i = 0; i < P->size(d); ++i) {
            int cid = cls[d][i];
            if (cls_value[cid].dim != d) continue;  // only dimension-realizing members
            Faces& nf = strata[cls_pos[cid].first][cls_pos[cid].second];
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : P->faces({d, i}).side(a)) {
                    int fc = cls[d - 1][j];
                    if (cls_value[fc].dim != d - 1) continue;  // degenerate face
                    auto [fd, fi] = cls_pos[fc];
                    auto& side = nf.side(a);
                    if (std::find(side.begin(), side.end(), fi) == side.end()) side.push_back(fi);
                }
        }
    CLFactorization out;
    out.middle = OgPoset::make(std::move(strata));
    out.collapse.source = P;
    out.collapse.target = out.middle;
    out.collapse.map.resize(P->dim() + 1);
    for (int d = 0; d <= P->dim(); ++d)
        for (int i = 0; i < P->size(d); ++i) {
            auto [cd, ci] = cls_pos[cls[d][i]];
            out.collapse.map[d].push_back({cd, ci});
        }
    out.embedding.source = out.middle;
    out.embedding.target = Q;
    out.embedding.map.resize(out.middle->dim() + 1);
    for (int d = 0; d <= out.middle->dim(); ++d)
        for (int cidx = 0; cidx < (int)by_dim[d].size(); ++cidx)
            out.embedding.map[d].push_back(cls_value[by_dim[d][cidx]]);
    // verification
    if (!same_function(compose(out.embedding, out.collapse), f))
        fail("NotLocalCollapse", "(C, L) factorization does not recompose");
    if (!is_local_embedding(out.embedding))
        fail("NotLocalCollapse", "(C, L) right factor is not a local embedding");
    MorphismClass cc = classify_morphism(out.collapse);
    if (!cc.collapse) fail("NotLocalCollapse", "(C, L) left factor is not a collapse");
    return out;
}

// --- pullback of a local collapse along a subdivision ------------------------------

namespace {

// Pullback over one atom: f_x : U ->> V a collapse (already factored), s_bar_v
// the comap W -> V. Returns the local pullback with each element labelled by
// its (U element, W element) pair.
struct LocalPB {
    PosetPtr poset;
    std::vector<std::vector<std::pair<ElemRef, ElemRef>>> pairs;  // per dim
};

LocalPB pb_stack(const CollapseFactorization& fact, size_t j, const GradedFunction& s_bar_v,
                 const std::vector<CylinderResult>& stage_cyls) {
    LocalPB r;
    if (j == 0) {
        // pullback of an identity-stage: W itself, labelled (s_bar(w), w)
        PosetPtr W = s_bar_v.source;
        r.poset = W;
        r.pairs.resize(W->dim() + 1);
        for (int d = 0; d <= W->dim(); ++d)
            for (int i = 0; i < W->size(d); ++i)
                r.pairs[d].push_back({s_bar_v.map[d][i], {d, i}});
        return r;
    }
    LocalPB prev = pb_stack(fact, j - 1, s_bar_v, stage_cyls);
    const Subset& K = fact.k_subsets[j - 1];  // closed in stages[j-1]
    Subset Kt(prev.poset);
    for (int d = 0; d <= prev.poset->dim(); ++d)
        for (int i = 0; i < prev.poset->size(d); ++i)
            if (K.contains(prev.pairs[d][i].first)) Kt.add({d, i});
    CylinderResult cyl = partial_cylinder({prev.poset, Kt});
    const CylinderResult& stage = stage_cyls[j - 1];  // stages[j] as cylinder over stages[j-1]
    r.poset = cyl.poset;
    r.pairs.resize(cyl.poset->dim() + 1);
    for (int d = 0; d <= cyl.poset->dim(); ++d)
        for (auto& lab : cyl.labels[d]) {
            auto [u_prev, w] = prev.pairs[lab.x.dim][lab.x.idx];
            ElemRef u_stage = stage.of(lab.i, u_prev);
            r.pairs[d].push_back({u_stage, w});
        }
    return r;
}

}  // namespace

CollapseSubdivisionPullback pullback_collapse_subdivision(const GradedFunction& f,
                                                          const GradedFunction& s_bar) {
    MorphismClass cf = classify_morphism(f);
    if (!cf.local_collapse) fail("ClassificationFailure", "pullback requires a local collapse");
    MorphismClass cs = classify_morphism(s_bar);
    if (!cs.comap) fail("ClassificationFailure", "pullback requires a subdivision");
    if (f.target != s_bar.target && f.target->key() != s_bar.target->key())
        fail("DomainMismatch", "the collapse and the subdivision must share their codomain");
    PosetPtr P = f.source, Q = f.target, Qp = s_bar.source;

    // global pair set
    std::map<std::pair<std::pair<int, int>, std::pair<int, int>>, ElemRef> index;
    std::vector<std::vector<std::pair<ElemRef, ElemRef>>> pairs;
    std::vector<std::vector<Faces>> strata;
    // first pass: compute each pair's local atom pullback, record dim + faces
    struct PendingElem {
        ElemRef x, y;
        int dim;
        std::vector<std::pair<std::pair<ElemRef, ElemRef>, Sign>> face_pairs;
    };
    std::vector<PendingElem> pend;
    for (int dx = 0; dx <= P->dim(); ++dx)
        for (int ix = 0; ix < P->size(dx); ++ix)
            for (int dy = 0; dy <= Qp->dim(); ++dy)
                for (int iy = 0; iy < Qp->size(dy); ++iy) {
                    ElemRef x{dx, ix}, y{dy, iy};
                    if (!(f(x) == s_bar(y))) continue;
                    // local pullback over cl{x} against the restricted comap
                    Extracted clx = extract(closure_of(P, {x}));
                    Extracted clfx = extract(closure_of(Q, {f(x)}));
                    GradedFunction fx = corestrict(restrict_function(f, clx), clfx);
                    CollapseFactorization fact = factor_collapse_impl(fx);
                    std::vector<CylinderResult> stage_cyls;
                    for (size_t j = 0; j + 1 < fact.stages.size(); ++j)
                        stage_cyls.push_back(partial_cylinder({fact.stages[j], fact.k_subsets[j]}));
                    Extracted w_ex = extract(preimage(s_bar, image_subset(clfx.emb)));
                    GradedFunction sv = corestrict(restrict_function(s_bar, w_ex), clfx);
                    LocalPB local = pb_stack(fact, fact.k_subsets.size(), sv, stage_cyls);
                    // invert fact.iso : clx.poset -> stages.back()
                    std::vector<std::vector<ElemRef>> iso_inv(fact.stages.back()->dim() + 1);
                    for (int d = 0; d <= fact.stages.back()->dim(); ++d)
                        iso_inv[d].assign(fact.stages.back()->size(d), ElemRef{-1, -1});
                    for (int d = 0; d <= clx.poset->dim(); ++d)
                        for (int i = 0; i < clx.poset->size(d); ++i) {
                            ElemRef t = fact.iso.map[d][i];
                            iso_inv[t.dim][t.idx] = clx.emb.map[d][i];
                        }
                    // find the top pair = (x, y); read off its faces
                    auto to_global = [&](std::pair<ElemRef, ElemRef> pr) {
                        ElemRef gx = iso_inv[pr.first.dim][pr.first.idx];
                        ElemRef gy = w_ex.emb.map[pr.second.dim][pr.second.idx];
                        return std::make_pair(gx, gy);
                    };
                    std::optional<ElemRef> top;
                    for (int d = 0; d <= local.poset->dim(); ++d)
                        for (int i = 0; i < (int)local.pairs[d].size(); ++i) {
                            auto g = to_global(local.pairs[d][i]);
                            if (g.first == x && g.second == y) top = ElemRef{d, i};
                        }
                    if (!top) fail("ClassificationFailure", "pullback misses a pair");
                    PendingElem pe;
                    pe.x = x;
                    pe.y = y;
                    pe.dim = top->dim;
                    for (Sign a : {Sign::minus, Sign::plus})
                        for (int j : local.poset->faces(*top).side(a)) {
                            auto g = to_global(local.pairs[top->dim - 1][j]);
                            pe.face_pairs.push_back({{{g.first}, {g.second}}, a});
                        }
                    pend.push_back(std::move(pe));
                }
    int nd = 0;
    for (auto& pe : pend) nd = std::max(nd, pe.dim);
    pairs.resize(nd + 1);
    strata.resize(nd + 1);
    for (auto& pe : pend) {
        index[{{pe.x.dim, pe.x.idx}, {pe.y.dim, pe.y.idx}}] = {pe.dim, (int)pairs[pe.dim].size()};
        pairs[pe.dim].push_back({pe.x, pe.y});
    }
    for (int d = 0; d <= nd; ++d) strata[d].resize(pairs[d].size());
    for (auto& pe : pend) {
        ElemRef self = index.at({{pe.x.dim, pe.x.idx}, {pe.y.dim, pe.y.idx}});
        Faces nf;
        for (auto& [g, a] : pe.face_pairs) {
            ElemRef t = index.at({{g.first.dim, g.first.idx}, {g.second.dim, g.second.idx}});
            nf.side(a).push_back(t.idx);
        }
        strata[self.dim][self.idx] = std::move(nf);
    }
    CollapseSubdivisionPullback out;
    out.poset = OgPoset::make(std::move(strata));
    out.pulled_collapse.source = out.poset;
    out.pulled_collapse.target = Qp;
    out.pulled_sub_bar.source = out.poset;
    out.pulled_sub_bar.target = P;
    out.pulled_collapse.map.resize(out.poset->dim() + 1);
    out.pulled_sub_bar.map.resize(out.poset->dim() + 1);
    for (int d = 0; d <= out.poset->dim(); ++d)
        for (auto& [x, y] : pairs[d]) {
            out.pulled_sub_bar.map[d].push_back(x);
            out.pulled_collapse.map[d].push_back(y);
        }
    // verification: commutation + classifications
    if (!same_function(compose(f, out.pulled_sub_bar), compose(s_bar, out.pulled_collapse)))
        fail("ClassificationFailure", "pullback square does not commute");
    MorphismClass ca = classify_morphism(out.pulled_collapse);
    if (!ca.local_collapse) fail("ClassificationFailure", "pulled-back map is not a local collapse");
    MorphismClass cb = classify_morphism(out.pulled_sub_bar);
    if (!cb.comap) fail("ClassificationFailure", "pulled-back subdivision is not a comap");
    return out;
}

// --- SCL morphisms -----------------------------------------------------------------

SclMorphism SclMorphism::identity(PosetPtr p) {
    SclMorphism m;
    m.sub_bar = GradedFunction::identity(p);
    m.post = GradedFunction::identity(p);
    return m;
}

SclMorphism SclMorphism::from_subdivision(const GradedFunction& s_bar) {
    SclMorphism m;
    m.sub_bar = s_bar;
    m.post = GradedFunction::identity(s_bar.source);
    return m;
}

SclMorphism SclMorphism::from_collapse(const GradedFunction& f) {
    SclMorphism m;
    m.sub_bar = GradedFunction::identity(f.source);
    m.post = f;
    return m;
}

SclMorphism SclMorphism::canonical() const {
    Canonical c = canonical_form(middle());
    // middle -> canonical iso; rewrite both legs through its inverse
    GradedFunction inv;
    inv.source = c.poset;
    inv.target = middle();
    inv.map.resize(c.poset->dim() + 1);
    for (int d = 0; d <= middle()->dim(); ++d)
        inv.map[d].resize(middle()->size(d));
    for (int d = 0; d <= middle()->dim(); ++d)
        for (int i = 0; i < middle()->size(d); ++i) {
            ElemRef t = c.to_canonical.map[d][i];
            inv.map[t.dim][t.idx] = {d, i};
        }
    SclMorphism m;
    m.sub_bar = compose(sub_bar, inv);
    m.post = compose(post, inv);
    return m;
}

json SclMorphism::to_json() const {
    return json{{"post", post.to_json()}, {"sub", sub_bar.to_json()}};
}

SclMorphism SclMorphism::from_json(const json& j) {
    SclMorphism m;
    m.sub_bar = GradedFunction::from_json(j.at("sub"));
    m.post = GradedFunction::from_json(j.at("post"));
    if (m.sub_bar.source->key() != m.post.source->key())
        fail("DomainMismatch", "the two legs of a local subdivision-collapse must share their source");
    MorphismClass cs = classify_morphism(m.sub_bar);
    if (!cs.comap) fail("ClassificationFailure", "sub leg is not a comap");
    MorphismClass cp = classify_morphism(m.post);
    if (!cp.local_collapse) fail("ClassificationFailure", "post leg is not a local collapse");
    return m;
}

bool scl_equal(const SclMorphism& a, const SclMorphism& b) {
    SclMorphism ca = a.canonical(), cb = b.canonical();
    if (ca.middle()->key() != cb.middle()->key()) return false;
    if (same_function(ca.sub_bar, cb.sub_bar) && same_function(ca.post, cb.post)) return true;
    // fall back: search the intertwining isomorphism explicitly
    for (auto& psi : all_isomorphisms(ca.middle(), cb.middle())) {
        GradedFunction s2 = compose(cb.sub_bar, psi);
        GradedFunction p2 = compose(cb.post, psi);
        if (same_function(s2, ca.sub_bar) && same_function(p2, ca.post)) return true;
    }
    return false;
}

SclMorphism compose_scl(const SclMorphism& g, const SclMorphism& f) {
    if (f.target()->key() != g.source()->key())
        fail("DomainMismatch", "compose_scl: codomain of the first is not the domain of the second");
    CollapseSubdivisionPullback pb = pullback_collapse_subdivision(f.post, g.sub_bar);
    SclMorphism m;
    m.sub_bar = compose(f.sub_bar, pb.pulled_sub_bar);
    m.post = compose(g.post, pb.pulled_collapse);
    return m.canonical();
}

TernaryFactorization factor_ternary(const SclMorphism& m) {
    TernaryFactorization t;
    t.subdivision = SclMorphism::from_subdivision(m.sub_bar);
    CLFactorization cl = factor_CL(m.post);
    t.collapse = cl.collapse;
    t.embedding = cl.embedding;
    return t;
}

// --- co-merger and globe subdivision -------------------------------------------------

GradedFunction co_merger(const CertPtr& u) {
    PosetPtr U = u->carrier;
    if (!is_round(U)) fail("NotRound", "co-merger requires a round molecule");
    CertPtr m = merger(u);
    Subset whole = Subset::whole(U);
    Subset bm = boundary(whole, -2, SignArg::minus);
    Subset bp = boundary(whole, -2, SignArg::plus);
    // index of each boundary element in the extracted copies used by merger()
    Extracted em = extract(bm), ep = extract(bp);
    std::vector<std::vector<ElemRef>> via(U->dim() + 1);
    for (int d = 0; d <= U->dim(); ++d) via[d].assign(U->size(d), ElemRef{-1, -1});
    for (int d = 0; d <= em.poset->dim(); ++d)
        for (int i = 0; i < em.poset->size(d); ++i) {
            ElemRef o = em.emb.map[d][i];
            via[o.dim][o.idx] = m->emb_left.map[d][i];
        }
    for (int d = 0; d <= ep.poset->dim(); ++d)
        for (int i = 0; i < ep.poset->size(d); ++i) {
            ElemRef o = ep.emb.map[d][i];
            if (via[o.dim][o.idx].dim < 0) via[o.dim][o.idx] = m->emb_right.map[d][i];
        }
    ElemRef top = *m->carrier->greatest();
    GradedFunction c;
    c.source = U;
    c.target = m->carrier;
    c.map.resize(U->dim() + 1);
    for (int d = 0; d <= U->dim(); ++d)
        for (int i = 0; i < U->size(d); ++i)
            c.map[d].push_back(via[d][i].dim >= 0 ? via[d][i] : top);
    return c;
}

GradedFunction globe_subdivision(const CertPtr& u) {
    PosetPtr U = u->carrier;
    if (!is_round(U)) fail("NotRound", "globe subdivision requires a round molecule");
    const int n = U->dim();
    CertPtr g = globe(n);
    PosetPtr G = g->carrier;
    Subset whole = Subset::whole(U);
    // globe elements: for k < n, the unique k-cell of bd_k^a(globe)
    auto globe_elem = [&](int k, Sign a) {
        Subset b = boundary(Subset::whole(G), k, a == Sign::minus ? SignArg::minus : SignArg::plus);
        auto els = b.elements_of_dim(k);
        if (els.size() != 1) fail("DimMismatch", "globe boundary is not a single cell");
        return els[0];
    };
    std::vector<std::vector<Subset>> bnds(n);
    for (int k = 0; k < n; ++k) {
        bnds[k].push_back(boundary(whole, k, SignArg::minus));
        bnds[k].push_back(boundary(whole, k, SignArg::plus));
    }
    GradedFunction c;
    c.source = U;
    c.target = G;
    c.map.resize(U->dim() + 1);
    ElemRef top = *G->greatest();
    for (int d = 0; d <= U->dim(); ++d)
        for (int i = 0; i < U->size(d); ++i) {
            ElemRef x{d, i};
            ElemRef dest = top;
            for (int k = d; k < n; ++k) {
                bool in_m = bnds[k][0].contains(x), in_p = bnds[k][1].contains(x);
                if (in_m || in_p) {
                    dest = globe_elem(k, in_m ? Sign::minus : Sign::plus);
                    break;
                }
            }
            c.map[d].push_back(dest);
        }
    return c;
}

// --- enumeration helpers ---------------------------------------------------------------

namespace {

template <typename Pred, typename Accept>
void enumerate_fns(PosetPtr from, PosetPtr to, Pred candidate_ok, Accept accept,
                   std::vector<GradedFunction>& out) {
    GradedFunction f;
    f.source = from;
    f.target = to;
    f.map.resize(from->dim() + 1);
    for (int d = 0; d <= from->dim(); ++d) f.map[d].assign(from->size(d), ElemRef{-1, -1});
    std::function<void(int, int)> rec = [&](int d, int i) {
        if (d > from->dim()) {
            if (accept(f)) out.push_back(f);
            return;
        }
        if (i == from->size(d)) {
            rec(d + 1, 0);
            return;
        }
        for (int td = 0; td <= to->dim(); ++td)
            for (int ti = 0; ti < to->size(td); ++ti) {
                if (!candidate_ok(f, ElemRef{d, i}, ElemRef{td, ti})) continue;
                f.map[d][i] = {td, ti};
                rec(d, i + 1);
                f.map[d][i] = {-1, -1};
            }
    };
    rec(0, 0);
}

}  // namespace

std::vector<GradedFunction> enumerate_comaps(PosetPtr from, PosetPtr to) {
    std::vector<GradedFunction> out;
    if (from->empty() || to->empty()) {
        if (from->empty() && to->empty()) {
            GradedFunction f;
            f.source = from;
            f.target = to;
            out.push_back(f);
        }
        return out;
    }
    enumerate_fns(
        from, to,
        [&](const GradedFunction& f, ElemRef x, ElemRef t) {
            if (t.dim < x.dim) return false;  // comaps weakly increase dimension
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : from->faces(x).side(a)) {
                    ElemRef m = f.map[x.dim - 1][j];
                    if (m.dim >= 0 && !to->le(m, t)) return false;
                }
            return true;
        },
        [&](const GradedFunction& f) { return classify_morphism(f).comap; }, out);
    return out;
}

std::vector<GradedFunction> enumerate_local_embeddings(PosetPtr from, PosetPtr to) {
    std::vector<GradedFunction> out;
    enumerate_fns(
        from, to,
        [&](const GradedFunction& f, ElemRef x, ElemRef t) {
            if (t.dim != x.dim) return false;
            for (Sign a : {Sign::minus, Sign::plus}) {
                const auto& xs = from->faces(x).side(a);
                const auto& ts = to->faces(t).side(a);
                if (xs.size() != ts.size()) return false;
                std::set<int> img;
                for (int j : xs) {
                    ElemRef m = f.map[x.dim - 1][j];
                    if (m.dim < 0) continue;
                    if (!std::binary_search(ts.begin(), ts.end(), m.idx)) return false;
                    img.insert(m.idx);
                }
            }
            return true;
        },
        [&](const GradedFunction& f) { return is_local_embedding(f); }, out);
    return out;
}

std::vector<GradedFunction> enumerate_surjective_maps(PosetPtr from, PosetPtr to) {
    std::vector<GradedFunction> out;
    enumerate_fns(
        from, to,
        [&](const GradedFunction& f, ElemRef x, ElemRef t) {
            if (t.dim > x.dim) return false;
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : from->faces(x).side(a)) {
                    ElemRef m = f.map[x.dim - 1][j];
                    if (m.dim >= 0 && !to->le(m, t)) return false;
                }
            return true;
        },
        [&](const GradedFunction& f) {
            return is_surjective(f) && classify_morphism(f).map;
        },
        out);
    return out;
}

}  // namespace rdcx
