#include "rdcx/ogposet.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rdcx {

void fail(const std::string& code, const std::string& msg) { throw Error(code, msg); }

static std::string ref_str(ElemRef x) {
    return "(" + std::to_string(x.dim) + "," + std::to_string(x.idx) + ")";
}

// --- OgPoset ------------------------------------------------------------

PosetPtr OgPoset::make(std::vector<std::vector<Faces>> strata, bool require_regular) {
    // drop empty top strata
    while (!strata.empty() && strata.back().empty()) strata.pop_back();
    auto p = std::make_shared<OgPoset>();
    const int ndim = static_cast<int>(strata.size());
    for (int d = 0; d < ndim; ++d) {
        if (strata[d].empty())
            fail("NotGraded", "stratum " + std::to_string(d) + " is empty below a nonempty one");
        const int below = d > 0 ? static_cast<int>(strata[d - 1].size()) : 0;
        for (int i = 0; i < static_cast<int>(strata[d].size()); ++i) {
            Faces& f = strata[d][i];
            std::sort(f.in.begin(), f.in.end());
            std::sort(f.out.begin(), f.out.end());
            f.in.erase(std::unique(f.in.begin(), f.in.end()), f.in.end());
            f.out.erase(std::unique(f.out.begin(), f.out.end()), f.out.end());
            for (int j : f.in)
                if (j < 0 || j >= below)
                    fail("FaceDimMismatch", "element " + ref_str({d, i}) +
                                                " input face " + std::to_string(j) +
                                                " does not index stratum " + std::to_string(d - 1));
            for (int j : f.out)
                if (j < 0 || j >= below)
                    fail("FaceDimMismatch", "element " + ref_str({d, i}) +
                                                " output face " + std::to_string(j) +
                                                " does not index stratum " + std::to_string(d - 1));
            std::vector<int> both;
            std::set_intersection(f.in.begin(), f.in.end(), f.out.begin(), f.out.end(),
                                  std::back_inserter(both));
            if (!both.empty())
                fail("OverlappingOrientation",
                     "element " + ref_str({d, i}) + " has face " + std::to_string(both[0]) +
                         " with both orientations");
            if (d >= 1 && f.in.empty() && f.out.empty())
                fail("NotGraded", "element " + ref_str({d, i}) +
                                      " of dimension >= 1 has no faces; grading fails");
            if (require_regular && d >= 1 && (f.in.empty() || f.out.empty()))
                fail("NotGraded", "element " + ref_str({d, i}) +
                                      " lacks an input or output face (regularity)");
        }
    }
    p->strata_ = std::move(strata);
    p->cofaces_.resize(p->strata_.size());
    p->total_ = 0;
    for (int d = 0; d < ndim; ++d) {
        p->cofaces_[d].resize(p->strata_[d].size());
        p->total_ += static_cast<int>(p->strata_[d].size());
    }
    for (int d = 1; d < ndim; ++d)
        for (int i = 0; i < static_cast<int>(p->strata_[d].size()); ++i) {
            for (int j : p->strata_[d][i].in) p->cofaces_[d - 1][j].in.push_back(i);
            for (int j : p->strata_[d][i].out) p->cofaces_[d - 1][j].out.push_back(i);
        }
    return p;
}

std::vector<int> OgPoset::stratum_sizes() const {
    std::vector<int> s;
    for (auto& st : strata_) s.push_back(static_cast<int>(st.size()));
    return s;
}

bool OgPoset::le(ElemRef a, ElemRef b) const {
    if (a.dim > b.dim) return false;
    if (a.dim == b.dim) return a.idx == b.idx;
    // walk down from b
    std::vector<int> cur{b.idx};
    for (int d = b.dim; d > a.dim; --d) {
        std::set<int> next;
        for (int i : cur) {
            const Faces& f = strata_[d][i];
            next.insert(f.in.begin(), f.in.end());
            next.insert(f.out.begin(), f.out.end());
        }
        cur.assign(next.begin(), next.end());
    }
    return std::binary_search(cur.begin(), cur.end(), a.idx);
}

std::optional<ElemRef> OgPoset::greatest() const {
    auto m = maximal_elements();
    if (m.size() == 1) return m[0];
    return std::nullopt;
}

std::vector<ElemRef> OgPoset::maximal_elements() const {
    std::vector<ElemRef> out;
    for (int d = 0; d <= dim(); ++d)
        for (int i = 0; i < size(d); ++i) {
            const Faces& c = cofaces_[d][i];
            if (c.in.empty() && c.out.empty()) out.push_back({d, i});
        }
    return out;
}

json OgPoset::to_json() const {
    json strata = json::array();
    for (auto& st : strata_) {
        json row = json::array();
        for (auto& f : st) row.push_back(json{{"in", f.in}, {"out", f.out}});
        strata.push_back(row);
    }
    return json{{"strata", strata}};
}

PosetPtr OgPoset::from_json(const json& j, bool require_regular) {
    if (!j.is_object() || !j.contains("strata") || !j["strata"].is_array())
        fail("NotGraded", "expected an object with a \"strata\" array");
    std::vector<std::vector<Faces>> strata;
    for (auto& row : j["strata"]) {
        std::vector<Faces> st;
        for (auto& e : row) {
            Faces f;
            if (e.contains("in")) f.in = e["in"].get<std::vector<int>>();
            if (e.contains("out")) f.out = e["out"].get<std::vector<int>>();
            st.push_back(std::move(f));
        }
        strata.push_back(std::move(st));
    }
    return make(std::move(strata), require_regular);
}

std::string OgPoset::key() const {
    std::ostringstream os;
    for (int d = 0; d <= dim(); ++d) {
        os << '|';
        for (int i = 0; i < size(d); ++i) {
            const Faces& f = strata_[d][i];
            os << '[';
            for (int j : f.in) os << j << ',';
            os << ';';
            for (int j : f.out) os << j << ',';
            os << ']';
        }
    }
    return os.str();
}

// --- Subset -------------------------------------------------------------

Subset::Subset(PosetPtr owner) : owner_(std::move(owner)) {
    mask_.resize(owner_->dim() + 1);
    for (int d = 0; d <= owner_->dim(); ++d) mask_[d].assign(owner_->size(d), 0);
}

Subset Subset::whole(PosetPtr owner) {
    Subset s(owner);
    for (auto& row : s.mask_) std::fill(row.begin(), row.end(), 1);
    s.count_ = owner->total_size();
    return s;
}

int Subset::dim() const {
    for (int d = static_cast<int>(mask_.size()) - 1; d >= 0; --d)
        for (char c : mask_[d])
            if (c) return d;
    return -1;
}

std::vector<ElemRef> Subset::elements() const {
    std::vector<ElemRef> out;
    for (int d = 0; d < static_cast<int>(mask_.size()); ++d)
        for (int i = 0; i < static_cast<int>(mask_[d].size()); ++i)
            if (mask_[d][i]) out.push_back({d, i});
    return out;
}

std::vector<ElemRef> Subset::elements_of_dim(int d) const {
    std::vector<ElemRef> out;
    if (d < 0 || d >= static_cast<int>(mask_.size())) return out;
    for (int i = 0; i < static_cast<int>(mask_[d].size()); ++i)
        if (mask_[d][i]) out.push_back({d, i});
    return out;
}

bool Subset::is_closed() const {
    for (auto x : elements())
        for (Sign a : {Sign::minus, Sign::plus})
            for (int j : owner_->faces(x).side(a))
                if (!contains({x.dim - 1, j})) return false;
    return true;
}

std::vector<ElemRef> Subset::maximal_in(int d) const {
    std::vector<ElemRef> out;
    for (auto x : elements()) {
        if (d >= 0 && x.dim != d) continue;
        bool has = false;
        for (Sign a : {Sign::minus, Sign::plus})
            for (int j : owner_->cofaces(x).side(a))
                if (contains({x.dim + 1, j})) { has = true; break; }
        if (!has) out.push_back(x);
    }
    return out;
}

void Subset::check_owner(const Subset& o) const {
    if (owner_ != o.owner_)
        fail("DanglingRef", "set operation between subsets of different posets");
}

bool operator==(const Subset& a, const Subset& b) {
    a.check_owner(b);
    return a.mask_ == b.mask_;
}

Subset Subset::set_union(const Subset& o) const {
    check_owner(o);
    Subset r(owner_);
    for (size_t d = 0; d < mask_.size(); ++d)
        for (size_t i = 0; i < mask_[d].size(); ++i)
            if (mask_[d][i] || o.mask_[d][i]) r.add({(int)d, (int)i});
    return r;
}

Subset Subset::set_intersection(const Subset& o) const {
    check_owner(o);
    Subset r(owner_);
    for (size_t d = 0; d < mask_.size(); ++d)
        for (size_t i = 0; i < mask_[d].size(); ++i)
            if (mask_[d][i] && o.mask_[d][i]) r.add({(int)d, (int)i});
    return r;
}

Subset Subset::set_difference(const Subset& o) const {
    check_owner(o);
    Subset r(owner_);
    for (size_t d = 0; d < mask_.size(); ++d)
        for (size_t i = 0; i < mask_[d].size(); ++i)
            if (mask_[d][i] && !o.mask_[d][i]) r.add({(int)d, (int)i});
    return r;
}

bool Subset::subset_of(const Subset& o) const {
    check_owner(o);
    for (size_t d = 0; d < mask_.size(); ++d)
        for (size_t i = 0; i < mask_[d].size(); ++i)
            if (mask_[d][i] && !o.mask_[d][i]) return false;
    return true;
}

json Subset::members_json() const {
    json out = json::array();
    for (int d = 0; d < static_cast<int>(mask_.size()); ++d) {
        json row = json::array();
        for (int i = 0; i < static_cast<int>(mask_[d].size()); ++i)
            if (mask_[d][i]) row.push_back(i);
        out.push_back(row);
    }
    return out;
}

Subset Subset::from_members_json(PosetPtr owner, const json& j) {
    Subset s(owner);
    if (!j.is_array()) fail("DanglingRef", "subset members must be an array of index lists");
    for (int d = 0; d < static_cast<int>(j.size()); ++d)
        for (auto& i : j[d]) {
            int idx = i.get<int>();
            if (d > owner->dim() || idx < 0 || idx >= owner->size(d))
                fail("DanglingRef", "subset member (" + std::to_string(d) + "," +
                                        std::to_string(idx) + ") outside the poset");
            s.add({d, idx});
        }
    return s;
}

// --- GradedFunction basics ----------------------------------------------

GradedFunction GradedFunction::identity(PosetPtr p) {
    GradedFunction f;
    f.source = f.target = p;
    f.map.resize(p->dim() + 1);
    for (int d = 0; d <= p->dim(); ++d)
        for (int i = 0; i < p->size(d); ++i) f.map[d].push_back({d, i});
    return f;
}

json GradedFunction::to_json() const {
    json m = json::array();
    for (auto& row : map)
        for (auto& x : row) m.push_back(json::array({x.dim, x.idx}));
    return json{{"map", m}, {"source", source->to_json()}, {"target", target->to_json()}};
}

GradedFunction GradedFunction::from_json(const json& j) {
    GradedFunction f;
    f.source = OgPoset::from_json(j.at("source"));
    f.target = OgPoset::from_json(j.at("target"));
    f.map.resize(f.source->dim() + 1);
    size_t pos = 0;
    const json& m = j.at("map");
    for (int d = 0; d <= f.source->dim(); ++d)
        for (int i = 0; i < f.source->size(d); ++i) {
            if (pos >= m.size()) fail("DanglingRef", "map has too few entries");
            ElemRef t{m[pos][0].get<int>(), m[pos][1].get<int>()};
            ++pos;
            if (t.dim < 0 || t.dim > f.target->dim() || t.idx < 0 || t.idx >= f.target->size(t.dim))
                fail("DanglingRef", "map entry " + ref_str(t) + " outside the target");
            f.map[d].push_back(t);
        }
    if (pos != m.size()) fail("DanglingRef", "map has too many entries");
    return f;
}

GradedFunction compose(const GradedFunction& g, const GradedFunction& f) {
    if (f.target != g.source && f.target->key() != g.source->key())
        fail("DomainMismatch", "composition of functions with mismatched middle object");
    GradedFunction h;
    h.source = f.source;
    h.target = g.target;
    h.map.resize(f.source->dim() + 1);
    for (int d = 0; d <= f.source->dim(); ++d)
        for (auto& t : f.map[d]) h.map[d].push_back(g.map[t.dim][t.idx]);
    return h;
}

bool same_function(const GradedFunction& f, const GradedFunction& g) {
    return f.map == g.map;
}

bool is_order_preserving(const GradedFunction& f) {
    for (int d = 1; d <= f.source->dim(); ++d)
        for (int i = 0; i < f.source->size(d); ++i) {
            ElemRef fx = f.map[d][i];
            const Faces& faces = f.source->faces({d, i});
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : faces.side(a))
                    if (!f.target->le(f.map[d - 1][j], fx)) return false;
        }
    return true;
}

bool is_injective(const GradedFunction& f) {
    std::set<std::pair<int, int>> seen;
    for (auto& row : f.map)
        for (auto& t : row)
            if (!seen.insert({t.dim, t.idx}).second) return false;
    return true;
}

bool is_surjective(const GradedFunction& f) {
    std::set<std::pair<int, int>> seen;
    for (auto& row : f.map)
        for (auto& t : row) seen.insert({t.dim, t.idx});
    return static_cast<int>(seen.size()) == f.target->total_size();
}

bool is_local_embedding(const GradedFunction& f) {
    for (int d = 0; d <= f.source->dim(); ++d)
        for (int i = 0; i < f.source->size(d); ++i) {
            ElemRef fx = f.map[d][i];
            if (fx.dim != d) return false;
            const Faces& sf = f.source->faces({d, i});
            const Faces& tf = f.target->faces(fx);
            for (Sign a : {Sign::minus, Sign::plus}) {
                const auto& ss = sf.side(a);
                const auto& ts = tf.side(a);
                if (ss.size() != ts.size()) return false;
                std::set<int> img;
                for (int j : ss) img.insert(f.map[d - 1][j].idx);
                if (static_cast<int>(img.size()) != static_cast<int>(ss.size())) return false;
                for (int j : ts)
                    if (!img.count(j)) return false;
            }
        }
    return true;
}

bool is_embedding(const GradedFunction& f) {
    return is_injective(f) && is_local_embedding(f);
}

Subset image_subset(const GradedFunction& f) {
    Subset s(f.target);
    for (auto& row : f.map)
        for (auto& t : row) s.add(t);
    return s;
}

Subset preimage(const GradedFunction& f, const Subset& t) {
    if (t.owner() != f.target) fail("DanglingRef", "preimage of a subset of a different poset");
    Subset s(f.source);
    for (int d = 0; d <= f.source->dim(); ++d)
        for (int i = 0; i < f.source->size(d); ++i)
            if (t.contains(f.map[d][i])) s.add({d, i});
    return s;
}

Extracted extract(const Subset& sub) {
    if (!sub.is_closed()) fail("DanglingRef", "extraction requires a closed subset");
    PosetPtr owner = sub.owner();
    std::vector<std::vector<int>> new_idx(owner->dim() + 1);
    std::vector<std::vector<Faces>> strata;
    std::vector<std::vector<ElemRef>> back;
    for (int d = 0; d <= owner->dim(); ++d) {
        new_idx[d].assign(owner->size(d), -1);
        std::vector<Faces> st;
        std::vector<ElemRef> b;
        for (int i = 0; i < owner->size(d); ++i) {
            if (!sub.contains({d, i})) continue;
            new_idx[d][i] = static_cast<int>(st.size());
            Faces f;
            for (Sign a : {Sign::minus, Sign::plus})
                for (int j : owner->faces({d, i}).side(a)) f.side(a).push_back(new_idx[d - 1][j]);
            st.push_back(std::move(f));
            b.push_back({d, i});
        }
        if (!st.empty()) {
            strata.push_back(std::move(st));
            back.push_back(std::move(b));
        } else
            break;  // closed subsets have no gaps in dimensions
    }
    Extracted e;
    e.poset = OgPoset::make(std::move(strata));
    e.emb.source = e.poset;
    e.emb.target = owner;
    e.emb.map = std::move(back);
    return e;
}

GradedFunction restrict_function(const GradedFunction& f, const Extracted& sub) {
    GradedFunction r;
    r.source = sub.poset;
    r.target = f.target;
    r.map.resize(sub.poset->dim() + 1);
    for (int d = 0; d <= sub.poset->dim(); ++d)
        for (auto& x : sub.emb.map[d]) r.map[d].push_back(f.map[x.dim][x.idx]);
    return r;
}

GradedFunction corestrict(const GradedFunction& f, const Extracted& target_sub) {
    std::vector<std::vector<int>> back(f.target->dim() + 1);
    for (int d = 0; d <= f.target->dim(); ++d) back[d].assign(f.target->size(d), -1);
    for (int d = 0; d <= target_sub.poset->dim(); ++d)
        for (int i = 0; i < target_sub.poset->size(d); ++i) {
            ElemRef o = target_sub.emb.map[d][i];
            back[o.dim][o.idx] = i;
        }
    GradedFunction r;
    r.source = f.source;
    r.target = target_sub.poset;
    r.map.resize(f.source->dim() + 1);
    for (int d = 0; d <= f.source->dim(); ++d)
        for (auto& t : f.map[d]) {
            if (back[t.dim][t.idx] < 0)
                fail("DanglingRef", "corestriction misses image element " + ref_str(t));
            r.map[d].push_back({t.dim, back[t.dim][t.idx]});
        }
    return r;
}

// --- closure, boundaries, roundness --------------------------------------

Subset closure(const Subset& s) {
    Subset r = s;
    std::vector<ElemRef> stack = s.elements();
    while (!stack.empty()) {
        ElemRef x = stack.back();
        stack.pop_back();
        for (Sign a : {Sign::minus, Sign::plus})
            for (int j : r.owner()->faces(x).side(a)) {
                ElemRef y{x.dim - 1, j};
                if (!r.contains(y)) {
                    r.add(y);
                    stack.push_back(y);
                }
            }
    }
    return r;
}

Subset closure_of(PosetPtr p, const std::vector<ElemRef>& elems) {
    Subset s(p);
    for (auto x : elems) {
        if (x.dim < 0 || x.dim > p->dim() || x.idx < 0 || x.idx >= p->size(x.dim))
            fail("DanglingRef", "element " + ref_str(x) + " outside the poset");
        s.add(x);
    }
    return closure(s);
}

std::vector<ElemRef> signed_faces(const Subset& u, int n, Sign a) {
    std::vector<ElemRef> out;
    for (auto x : u.elements_of_dim(n)) {
        bool blocked = false;
        for (int j : u.owner()->cofaces(x).side(flip(a)))
            if (u.contains({n + 1, j})) { blocked = true; break; }
        if (!blocked) out.push_back(x);
    }
    return out;
}

static Subset boundary_one(const Subset& u, int n, Sign a) {
    Subset acc(u.owner());
    for (auto x : signed_faces(u, n, a)) acc.add(x);
    for (auto x : u.maximal_in())
        if (x.dim < n) acc.add(x);
    return closure(acc);
}

Subset boundary(const Subset& u, int n, SignArg sign) {
    if (n == -2) n = u.dim() - 1;
    if (n < 0) return Subset(u.owner());
    if (sign == SignArg::both)
        return boundary_one(u, n, Sign::minus).set_union(boundary_one(u, n, Sign::plus));
    return boundary_one(u, n, sign == SignArg::minus ? Sign::minus : Sign::plus);
}

Subset whole_boundary(const Subset& u) {
    Subset acc(u.owner());
    for (int k = 0; k < u.dim(); ++k) acc = acc.set_union(boundary(u, k, SignArg::both));
    return acc;
}

Subset interior(const Subset& u) { return u.set_difference(whole_boundary(u)); }

Roundness roundness_check(const Subset& u) {
    if (!u.is_closed()) fail("DanglingRef", "roundness requires a closed subset");
    Roundness r;
    const int du = u.dim();
    r.globular = true;
    for (int n = 1; n <= du && r.globular; ++n)
        for (Sign b : {Sign::minus, Sign::plus}) {
            Subset bn = boundary(u, n, b == Sign::minus ? SignArg::minus : SignArg::plus);
            for (int k = 0; k < n && r.globular; ++k)
                for (Sign a : {Sign::minus, Sign::plus}) {
                    SignArg sa = a == Sign::minus ? SignArg::minus : SignArg::plus;
                    if (!(boundary(bn, k, sa) == boundary(u, k, sa))) {
                        r.globular = false;
                        break;
                    }
                }
            if (!r.globular) break;
        }
    r.round = r.globular;
    if (r.round)
        for (int n = 0; n < du; ++n) {
            Subset lhs = boundary(u, n, SignArg::minus).set_intersection(boundary(u, n, SignArg::plus));
            Subset rhs = n == 0 ? Subset(u.owner()) : boundary(u, n - 1, SignArg::both);
            if (!(lhs == rhs)) { r.round = false; break; }
        }
    return r;
}

bool is_round(PosetPtr p) {
    auto r = roundness_check(Subset::whole(p));
    return r.round;
}

ThinnessReport check_oriented_thinness(PosetPtr p) {
    ThinnessReport rep;
    for (int d = 1; d <= p->dim(); ++d)
        for (int i = 0; i < p->size(d); ++i) {
            if (d == 1) {
                const Faces& f = p->faces({1, i});
                if (f.in.size() != 1 || f.out.size() != 1) {
                    rep.ok = false;
                    rep.violations.push_back(
                        {{1, i}, {1, i}, "1-dimensional element without exactly one input and one output face"});
                }
                continue;
            }
            // intervals [x, z] with z = (d, i), x two below
            std::map<int, std::vector<std::pair<int, std::pair<Sign, Sign>>>> mids;
            // mids[x] = list of (y, (alpha, beta))  with  x in faces^alpha(y), y in faces^beta(z)
            for (Sign b : {Sign::minus, Sign::plus})
                for (int y : p->faces({d, i}).side(b))
                    for (Sign a : {Sign::minus, Sign::plus})
                        for (int x : p->faces({d - 1, y}).side(a))
                            mids[x].push_back({y, {a, b}});
            for (auto& [x, ys] : mids) {
                if (ys.size() != 2) {
                    rep.ok = false;
                    rep.violations.push_back({{d - 2, x},
                                              {d, i},
                                              "interval contains " + std::to_string(ys.size()) +
                                                  " intermediate elements, expected 2"});
                    continue;
                }
                auto sgn = [](Sign s) { return s == Sign::minus ? -1 : 1; };
                int p1 = sgn(ys[0].second.first) * sgn(ys[0].second.second);
                int p2 = sgn(ys[1].second.first) * sgn(ys[1].second.second);
                if (p1 != -p2) {
                    rep.ok = false;
                    rep.violations.push_back(
                        {{d - 2, x}, {d, i}, "interval orientation products do not cancel"});
                }
            }
        }
    return rep;
}

// --- isomorphism search ---------------------------------------------------

namespace {

// Colour refinement: initial colour by (dim, face/coface degrees), refined by
// multisets of neighbour colours until stable.
std::vector<std::vector<int>> refine_colors(const OgPoset& p) {
    // ranks are assigned by sorted signature order, so colours are invariant
    // under relabelling
    std::vector<std::vector<int>> col(p.dim() + 1);
    {
        std::map<std::tuple<int, size_t, size_t, size_t, size_t>, int> ranks;
        for (int d = 0; d <= p.dim(); ++d)
            for (int i = 0; i < p.size(d); ++i)
                ranks[std::make_tuple(d, p.faces({d, i}).in.size(), p.faces({d, i}).out.size(),
                                      p.cofaces({d, i}).in.size(), p.cofaces({d, i}).out.size())] = 0;
        int r = 0;
        for (auto& [k, v] : ranks) v = r++;
        for (int d = 0; d <= p.dim(); ++d) {
            col[d].resize(p.size(d));
            for (int i = 0; i < p.size(d); ++i)
                col[d][i] = ranks[std::make_tuple(
                    d, p.faces({d, i}).in.size(), p.faces({d, i}).out.size(),
                    p.cofaces({d, i}).in.size(), p.cofaces({d, i}).out.size())];
        }
    }
    for (int iter = 0; iter < p.total_size(); ++iter) {
        std::vector<std::vector<std::pair<int, std::vector<int>>>> sigs(p.dim() + 1);
        std::map<std::pair<int, std::vector<int>>, int> ranks;
        for (int d = 0; d <= p.dim(); ++d) {
            sigs[d].resize(p.size(d));
            for (int i = 0; i < p.size(d); ++i) {
                std::vector<int> sig;
                auto push_sorted = [&](const std::vector<int>& idxs, int dd, int tag) {
                    std::vector<int> cs;
                    for (int j : idxs) cs.push_back(col[dd][j]);
                    std::sort(cs.begin(), cs.end());
                    sig.push_back(tag);
                    sig.insert(sig.end(), cs.begin(), cs.end());
                };
                push_sorted(p.faces({d, i}).in, d - 1, -1);
                push_sorted(p.faces({d, i}).out, d - 1, -2);
                push_sorted(p.cofaces({d, i}).in, d + 1, -3);
                push_sorted(p.cofaces({d, i}).out, d + 1, -4);
                sigs[d][i] = {col[d][i], std::move(sig)};
                ranks[sigs[d][i]] = 0;
            }
        }
        int r = 0;
        for (auto& [k, v] : ranks) v = r++;
        std::vector<std::vector<int>> next(p.dim() + 1);
        for (int d = 0; d <= p.dim(); ++d) {
            next[d].resize(p.size(d));
            for (int i = 0; i < p.size(d); ++i) next[d][i] = ranks[sigs[d][i]];
        }
        if (next == col) break;
        col = std::move(next);
    }
    return col;
}

struct IsoSearch {
    const OgPoset& p;
    const OgPoset& q;
    std::vector<std::vector<int>> pc, qc;
    std::vector<std::vector<int>> assign;   // p elem -> q idx or -1
    std::vector<std::vector<char>> used;    // q elems used
    std::vector<GradedFunction> results;
    size_t limit;

    IsoSearch(const OgPoset& p_, const OgPoset& q_, size_t lim) : p(p_), q(q_), limit(lim) {
        pc = refine_colors(p);
        qc = refine_colors(q);
        assign.resize(p.dim() + 1);
        used.resize(p.dim() + 1);
        for (int d = 0; d <= p.dim(); ++d) {
            assign[d].assign(p.size(d), -1);
            used[d].assign(q.size(d), 0);
        }
    }

    bool compatible(ElemRef x, int qi) {
        if (pc[x.dim][x.idx] != qc[x.dim][qi]) return false;
        // check faces already assigned map correctly and bijectively
        for (Sign a : {Sign::minus, Sign::plus}) {
            const auto& xs = p.faces(x).side(a);
            const auto& ys = q.faces({x.dim, qi}).side(a);
            if (xs.size() != ys.size()) return false;
            for (int j : xs) {
                int m = assign[x.dim - 1][j];
                if (m >= 0 && !std::binary_search(ys.begin(), ys.end(), m)) return false;
            }
        }
        return true;
    }

    void run(std::vector<ElemRef>& order, size_t k) {
        if (results.size() >= limit) return;
        if (k == order.size()) {
            GradedFunction f;
            f.source = std::shared_ptr<const OgPoset>(&p, [](const OgPoset*) {});
            f.target = std::shared_ptr<const OgPoset>(&q, [](const OgPoset*) {});
            f.map.resize(p.dim() + 1);
            for (int d = 0; d <= p.dim(); ++d)
                for (int i = 0; i < p.size(d); ++i) f.map[d].push_back({d, assign[d][i]});
            results.push_back(std::move(f));
            return;
        }
        ElemRef x = order[k];
        for (int qi = 0; qi < q.size(x.dim); ++qi) {
            if (used[x.dim][qi] || !compatible(x, qi)) continue;
            assign[x.dim][x.idx] = qi;
            used[x.dim][qi] = 1;
            run(order, k + 1);
            assign[x.dim][x.idx] = -1;
            used[x.dim][qi] = 0;
            if (results.size() >= limit) return;
        }
    }
};

}  // namespace

std::vector<GradedFunction> all_isomorphisms(PosetPtr p, PosetPtr q, size_t limit) {
    std::vector<GradedFunction> out;
    if (p->dim() != q->dim()) return out;
    for (int d = 0; d <= p->dim(); ++d)
        if (p->size(d) != q->size(d)) return out;
    if (p->empty()) {
        GradedFunction f;
        f.source = p;
        f.target = q;
        out.push_back(std::move(f));
        return out;
    }
    IsoSearch s(*p, *q, limit);
    // order: top dimension first (most constrained), then downward
    std::vector<ElemRef> order;
    for (int d = p->dim(); d >= 0; --d)
        for (int i = 0; i < p->size(d); ++i) order.push_back({d, i});
    s.run(order, 0);
    for (auto& f : s.results) {
        f.source = p;
        f.target = q;
    }
    return s.results;
}

std::optional<GradedFunction> find_isomorphism(PosetPtr p, PosetPtr q) {
    auto v = all_isomorphisms(p, q, 1);
    if (v.empty()) return std::nullopt;
    return v[0];
}

// --- canonical form -------------------------------------------------------

namespace {

// Serialize the poset under a per-stratum permutation (new index -> old index).
std::string serialize_perm(const OgPoset& p, const std::vector<std::vector<int>>& perm) {
    std::vector<std::vector<int>> inv(p.dim() + 1);
    for (int d = 0; d <= p.dim(); ++d) {
        inv[d].assign(p.size(d), -1);
        for (int i = 0; i < p.size(d); ++i) inv[d][perm[d][i]] = i;
    }
    std::ostringstream os;
    for (int d = 0; d <= p.dim(); ++d) {
        os << '|';
        for (int ni = 0; ni < p.size(d); ++ni) {
            const Faces& f = p.faces({d, perm[d][ni]});
            std::vector<int> in, out;
            for (int j : f.in) in.push_back(inv[d - 1][j]);
            for (int j : f.out) out.push_back(inv[d - 1][j]);
            std::sort(in.begin(), in.end());
            std::sort(out.begin(), out.end());
            os << '[';
            for (int j : in) os << j << ',';
            os << ';';
            for (int j : out) os << j << ',';
            os << ']';
        }
    }
    return os.str();
}

struct CanonSearch {
    const OgPoset& p;
    std::vector<std::vector<int>> colors;
    std::string best;
    std::vector<std::vector<int>> best_perm;
    bool have = false;

    explicit CanonSearch(const OgPoset& p_) : p(p_) { colors = refine_colors(p); }

    // Build candidate orders stratum by stratum; ambiguity only inside colour
    // classes, resolved by trying each representative and keeping the lexmin.
    void run() {
        std::vector<std::vector<int>> perm(p.dim() + 1);
        place(perm, 0, {});
    }

    void place(std::vector<std::vector<int>>& perm, int d, std::vector<std::vector<int>> done) {
        if (d > p.dim()) {
            std::string s = serialize_perm(p, perm);
            if (!have || s < best) {
                best = s;
                best_perm = perm;
                have = true;
            }
            return;
        }
        // order stratum d: sort indices by (colour, face-multiset w.r.t. the
        // already placed stratum below), branch on remaining ties
        std::vector<int> idx(p.size(d));
        std::iota(idx.begin(), idx.end(), 0);
        std::vector<int> below_pos;  // old idx -> new pos below
        if (d > 0) {
            below_pos.assign(p.size(d - 1), -1);
            for (int i = 0; i < p.size(d - 1); ++i) below_pos[perm[d - 1][i]] = i;
        }
        auto sig = [&](int i) {
            std::vector<int> s{colors[d][i]};
            if (d > 0) {
                std::vector<int> in, out;
                for (int j : p.faces({d, i}).in) in.push_back(below_pos[j]);
                for (int j : p.faces({d, i}).out) out.push_back(below_pos[j]);
                std::sort(in.begin(), in.end());
                std::sort(out.begin(), out.end());
                s.push_back(-1);
                s.insert(s.end(), in.begin(), in.end());
                s.push_back(-2);
                s.insert(s.end(), out.begin(), out.end());
            }
            return s;
        };
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return sig(a) < sig(b); });
        // group ties
        std::vector<std::vector<int>> groups;
        for (int i : idx) {
            if (!groups.empty() && sig(groups.back()[0]) == sig(i))
                groups.back().push_back(i);
            else
                groups.push_back({i});
        }
        branch(perm, d, groups, 0, {}, done);
    }

    void branch(std::vector<std::vector<int>>& perm, int d, std::vector<std::vector<int>>& groups,
                size_t gi, std::vector<int> acc, std::vector<std::vector<int>>& done) {
        if (gi == groups.size()) {
            perm[d] = acc;
            place(perm, d + 1, done);
            return;
        }
        auto& g = groups[gi];
        if (g.size() == 1) {
            acc.push_back(g[0]);
            branch(perm, d, groups, gi + 1, std::move(acc), done);
            return;
        }
        // try each permutation of the tied group (groups stay small in practice)
        std::sort(g.begin(), g.end());
        std::vector<int> ord = g;
        do {
            auto acc2 = acc;
            acc2.insert(acc2.end(), ord.begin(), ord.end());
            branch(perm, d, groups, gi + 1, std::move(acc2), done);
        } while (std::next_permutation(ord.begin(), ord.end()));
    }
};

}  // namespace

Canonical canonical_form(PosetPtr p) {
    Canonical c;
    if (p->empty()) {
        c.poset = p;
        c.to_canonical.source = c.to_canonical.target = p;
        c.key = "";
        return c;
    }
    CanonSearch s(*p);
    s.run();
    // rebuild the poset under best_perm
    std::vector<std::vector<int>> inv(p->dim() + 1);
    for (int d = 0; d <= p->dim(); ++d) {
        inv[d].assign(p->size(d), -1);
        for (int i = 0; i < p->size(d); ++i) inv[d][s.best_perm[d][i]] = i;
    }
    std::vector<std::vector<Faces>> strata(p->dim() + 1);
    for (int d = 0; d <= p->dim(); ++d)
        for (int ni = 0; ni < p->size(d); ++ni) {
            const Faces& f = p->faces({d, s.best_perm[d][ni]});
            Faces nf;
            for (int j : f.in) nf.in.push_back(inv[d - 1][j]);
            for (int j : f.out) nf.out.push_back(inv[d - 1][j]);
            strata[d].push_back(std::move(nf));
        }
    c.poset = OgPoset::make(std::move(strata));
    c.to_canonical.source = p;
    c.to_canonical.target = c.poset;
    c.to_canonical.map.resize(p->dim() + 1);
    for (int d = 0; d <= p->dim(); ++d)
        for (int i = 0; i < p->size(d); ++i) c.to_canonical.map[d].push_back({d, inv[d][i]});
    c.key = s.best;
    return c;
}

std::string canonical_key(PosetPtr p) {
    if (p->empty()) return "";
    CanonSearch s(*p);
    s.run();
    return s.best;
}

}  // namespace rdcx
