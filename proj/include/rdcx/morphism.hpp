#pragma once

#include "rdcx/molecule.hpp"
#include "rdcx/ogposet.hpp"

namespace rdcx {

struct MorphismClass {
    bool local_embedding = false;
    bool map = false;
    bool final = false;
    bool comap = false;
    bool local_collapse = false;
    bool collapse = false;
    bool cylindrical_collapse = false;

    json to_json() const;
};

MorphismClass classify_morphism(const GradedFunction& f);

// Unique presentation of a collapse of atoms as a stack of generating
// collapses over an isomorphism. stages[0] is the codomain; stages[i] =
// arr (x)_{k_subsets[i-1]} stages[i-1]; iso : source -> stages.back().
struct CollapseFactorization {
    std::vector<PosetPtr> stages;
    std::vector<Subset> k_subsets;        // k_subsets[i] closed in stages[i]
    std::vector<GradedFunction> taus;     // taus[i] : stages[i+1] -> stages[i]
    GradedFunction iso;                   // source -> stages.back()
    GradedFunction replay() const;        // composite, equals the factored map
    json to_json() const;
};

CollapseFactorization factor_collapse(const GradedFunction& p);

std::vector<GradedFunction> sections_of_collapse(const GradedFunction& p);

// (collapse, local embedding) factorization of a local collapse.
struct CLFactorization {
    PosetPtr middle;
    GradedFunction collapse;   // source -> middle, final local collapse
    GradedFunction embedding;  // middle -> target, local embedding
};
CLFactorization factor_CL(const GradedFunction& f);

// Pullback of a local collapse f : P -> Q along a subdivision s : Q ~> Q'
// (s given by its comap s_bar : Q' -> Q). Produces the pulled-back local
// collapse  s*f : P' -> Q'  and subdivision  f*s : P ~> P' (comap P' -> P).
struct CollapseSubdivisionPullback {
    PosetPtr poset;            // P'
    GradedFunction pulled_collapse;     // P' -> Q'
    GradedFunction pulled_sub_bar;      // P' -> P (comap; dual of f*s)
};
CollapseSubdivisionPullback pullback_collapse_subdivision(const GradedFunction& f,
                                                          const GradedFunction& s_bar);

// Local subdivision-collapse [post, sub]: sub is the comap P' -> P
// representing s : P ~> P', post the local collapse P' -> Q.
struct SclMorphism {
    GradedFunction sub_bar;  // comap: middle -> source
    GradedFunction post;     // local collapse: middle -> target

    PosetPtr source() const { return sub_bar.target; }
    PosetPtr middle() const { return sub_bar.source; }
    PosetPtr target() const { return post.target; }

    static SclMorphism identity(PosetPtr p);
    static SclMorphism from_subdivision(const GradedFunction& s_bar);
    static SclMorphism from_collapse(const GradedFunction& f);

    SclMorphism canonical() const;  // middle relabelled canonically
    json to_json() const;
    static SclMorphism from_json(const json& j);
};

bool scl_equal(const SclMorphism& a, const SclMorphism& b);

SclMorphism compose_scl(const SclMorphism& g, const SclMorphism& f);  // g after f

struct TernaryFactorization {
    SclMorphism subdivision;     // pure subdivision part
    GradedFunction collapse;     // final collapse
    GradedFunction embedding;    // local embedding
};
TernaryFactorization factor_ternary(const SclMorphism& m);

// Comap U -> mrg U underlying the co-merger subdivision mrg U ~> U.
GradedFunction co_merger(const CertPtr& u);

// Comap U -> globe(dim U) underlying the unique subdivision globe ~> U.
GradedFunction globe_subdivision(const CertPtr& u);

// Exhaustive enumeration helpers (search oracles and horn machinery).
std::vector<GradedFunction> enumerate_comaps(PosetPtr from, PosetPtr to);
std::vector<GradedFunction> enumerate_local_embeddings(PosetPtr from, PosetPtr to);
std::vector<GradedFunction> enumerate_surjective_maps(PosetPtr from, PosetPtr to);

}  // namespace rdcx
