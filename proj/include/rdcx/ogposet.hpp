#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace rdcx {

using json = nlohmann::json;

// Structured error: a short machine-readable code plus a human message.
struct Error : std::runtime_error {
    std::string code;
    Error(std::string c, const std::string& msg)
        : std::runtime_error(c + ": " + msg), code(std::move(c)) {}
};

[[noreturn]] void fail(const std::string& code, const std::string& msg);

enum class Sign : int8_t { minus = 0, plus = 1 };
inline Sign flip(Sign a) { return a == Sign::minus ? Sign::plus : Sign::minus; }
inline const char* sign_name(Sign a) { return a == Sign::minus ? "-" : "+"; }

// Boundary selector: input, output, or their union.
enum class SignArg : int8_t { minus = 0, plus = 1, both = 2 };

struct ElemRef {
    int dim = 0;
    int idx = 0;
    friend bool operator==(ElemRef a, ElemRef b) { return a.dim == b.dim && a.idx == b.idx; }
    friend bool operator<(ElemRef a, ElemRef b) {
        return a.dim != b.dim ? a.dim < b.dim : a.idx < b.idx;
    }
};

// Input/output face lists of one element, indices one stratum below. Sorted.
struct Faces {
    std::vector<int> in, out;
    const std::vector<int>& side(Sign a) const { return a == Sign::minus ? in : out; }
    std::vector<int>& side(Sign a) { return a == Sign::minus ? in : out; }
};

class OgPoset;
using PosetPtr = std::shared_ptr<const OgPoset>;

// Oriented graded poset, stratified by dimension. Immutable once built.
class OgPoset {
public:
    // Validates grading, face ranges and orientation bipartition.
    // With require_regular, every element of dimension >= 1 must have at least
    // one input and one output face.
    static PosetPtr make(std::vector<std::vector<Faces>> strata, bool require_regular = false);

    int dim() const { return static_cast<int>(strata_.size()) - 1; }
    int size(int d) const {
        return (d < 0 || d > dim()) ? 0 : static_cast<int>(strata_[d].size());
    }
    int total_size() const { return total_; }
    bool empty() const { return total_ == 0; }
    std::vector<int> stratum_sizes() const;

    const Faces& faces(ElemRef x) const { return strata_[x.dim][x.idx]; }
    const Faces& cofaces(ElemRef x) const { return cofaces_[x.dim][x.idx]; }

    bool le(ElemRef a, ElemRef b) const;  // a <= b in the generated order

    // Unique maximal element, if the poset has one.
    std::optional<ElemRef> greatest() const;
    std::vector<ElemRef> maximal_elements() const;

    json to_json() const;
    static PosetPtr from_json(const json& j, bool require_regular = false);

    std::string key() const;  // serialization of the face table, not canonical

private:
    std::vector<std::vector<Faces>> strata_;
    std::vector<std::vector<Faces>> cofaces_;  // cofaces_[d][i]: one stratum above
    int total_ = 0;
    friend class SubsetBuilder;
};

// A selection of elements of a fixed owner poset, stored as bitmasks per
// dimension. Used both for arbitrary subsets and (after closure) closed ones.
class Subset {
public:
    Subset() = default;
    explicit Subset(PosetPtr owner);
    static Subset whole(PosetPtr owner);

    const PosetPtr& owner() const { return owner_; }
    bool contains(ElemRef x) const { return mask_[x.dim][x.idx] != 0; }
    void add(ElemRef x) {
        if (!mask_[x.dim][x.idx]) { mask_[x.dim][x.idx] = 1; ++count_; }
    }
    int count() const { return count_; }
    bool is_empty() const { return count_ == 0; }
    int dim() const;  // max dimension of a member, -1 if empty

    std::vector<ElemRef> elements() const;           // ordered by (dim, idx)
    std::vector<ElemRef> elements_of_dim(int d) const;

    bool is_closed() const;
    std::vector<ElemRef> maximal_in(int d = -1) const;  // members with no cofaces inside (of dim d, or all)

    friend bool operator==(const Subset& a, const Subset& b);
    Subset set_union(const Subset& o) const;
    Subset set_intersection(const Subset& o) const;
    Subset set_difference(const Subset& o) const;
    bool subset_of(const Subset& o) const;

    json members_json() const;  // [[indices per dim] ...]
    static Subset from_members_json(PosetPtr owner, const json& j);

private:
    void check_owner(const Subset& o) const;
    PosetPtr owner_;
    std::vector<std::vector<char>> mask_;
    int count_ = 0;
};

using ClosedSubset = Subset;  // closedness is checked where required

struct ThinnessViolation {
    ElemRef bottom, top;
    std::string reason;
};

struct ThinnessReport {
    bool ok = true;
    std::vector<ThinnessViolation> violations;
};

struct Roundness {
    bool globular = false;
    bool round = false;
};

// Element-wise assignment between posets. Total on the source.
struct GradedFunction {
    PosetPtr source, target;
    std::vector<std::vector<ElemRef>> map;  // map[d][i] = image of (d, i)

    ElemRef operator()(ElemRef x) const { return map[x.dim][x.idx]; }
    static GradedFunction identity(PosetPtr p);

    json to_json() const;
    static GradedFunction from_json(const json& j);
};

GradedFunction compose(const GradedFunction& g, const GradedFunction& f);  // g after f
bool same_function(const GradedFunction& f, const GradedFunction& g);

bool is_order_preserving(const GradedFunction& f);
bool is_injective(const GradedFunction& f);
bool is_surjective(const GradedFunction& f);
// Morphism of oriented graded posets: grade-preserving, bijective on each
// signed face set. These are exactly the local embeddings.
bool is_local_embedding(const GradedFunction& f);
bool is_embedding(const GradedFunction& f);

Subset image_subset(const GradedFunction& f);
Subset preimage(const GradedFunction& f, const Subset& t);

// Extraction of a closed subset as a standalone poset, with its embedding.
struct Extracted {
    PosetPtr poset;
    GradedFunction emb;  // extracted -> owner
};
Extracted extract(const Subset& closed);

// Restriction of f to a closed subset of its source (target unchanged).
GradedFunction restrict_function(const GradedFunction& f, const Extracted& sub);
// Restriction with codomain the extracted closure of the image.
GradedFunction corestrict(const GradedFunction& f, const Extracted& target_sub);

// --- core operations ---------------------------------------------------

Subset closure(const Subset& s);
Subset closure_of(PosetPtr p, const std::vector<ElemRef>& elems);

// The signed face set of a closed subset: n-dimensional members with no
// coface of the opposite sign inside the subset.
std::vector<ElemRef> signed_faces(const Subset& closed_u, int n, Sign a);

// Input/output n-boundary of a closed subset; n = -2 means dim(U) - 1.
Subset boundary(const Subset& closed_u, int n = -2, SignArg sign = SignArg::both);
Subset whole_boundary(const Subset& closed_u);  // union over k < dim U
Subset interior(const Subset& closed_u);

Roundness roundness_check(const Subset& closed_u);
bool is_round(PosetPtr p);

ThinnessReport check_oriented_thinness(PosetPtr p);

// Every cl{x} is an atom (checked combinatorially via molecule recognition).
bool is_regular(PosetPtr p);

std::optional<GradedFunction> find_isomorphism(PosetPtr p, PosetPtr q);
std::vector<GradedFunction> all_isomorphisms(PosetPtr p, PosetPtr q, size_t limit = SIZE_MAX);

// Deterministic canonical relabelling; equal keys iff isomorphic.
struct Canonical {
    PosetPtr poset;
    GradedFunction to_canonical;  // original -> canonical
    std::string key;
};
Canonical canonical_form(PosetPtr p);
std::string canonical_key(PosetPtr p);

}  // namespace rdcx
